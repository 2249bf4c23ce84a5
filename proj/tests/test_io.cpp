#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mckv/errors.hpp"
#include "mckv/io.hpp"
#include "mckv/levy.hpp"

using namespace mckv;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("format_double round-trips") {
    for (double v : {0.0, 1.0, -1.0, 0.1, 1.0 / 3.0, 1e-300, 6.02214076e23,
                     -2.2250738585072014e-308}) {
      const std::string s = io::format_double(v);
      CHECK(std::stod(s) == v);
    }
    CHECK(io::format_double(1.0) == "1");
  }

  TEST_CASE("csv escaping follows rfc 4180") {
    CHECK(io::csv_escape("plain") == "plain");
    CHECK(io::csv_escape("with space") == "with space");
    CHECK(io::csv_escape("a,b") == "\"a,b\"");
    CHECK(io::csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(io::csv_escape("line\nbreak") == "\"line\nbreak\"");
    CHECK(io::csv_escape("") == "");
  }

  TEST_CASE("csv files use crlf rows and quoted cells") {
    const std::string path = temp_path("mckv_io_test.csv");
    {
      io::CsvFile csv(path);
      csv.cell("n").cell("value").cell("note");
      csv.end_row();
      csv.cell(std::size_t{64}).cell(0.5).cell("a,b");
      csv.end_row();
      csv.close();
    }
    CHECK(slurp(path) == "n,value,note\r\n64,0.5,\"a,b\"\r\n");
    std::filesystem::remove(path);

    CHECK_THROWS_AS(io::CsvFile("/nonexistent-dir/x.csv"), IoError);
  }

  TEST_CASE("fnv1a64 matches the reference vectors") {
    const auto hash_str = [](const char* s) {
      return io::fnv1a64({reinterpret_cast<const unsigned char*>(s), std::strlen(s)});
    };
    // standard FNV-1a test vectors
    CHECK(io::fnv1a64({}) == 14695981039346656037ull);
    CHECK(hash_str("a") == 0xaf63dc4c8601ec8cull);
    CHECK(hash_str("foobar") == 0x85944171f73967e8ull);

    const std::string path = temp_path("mckv_io_hash.bin");
    {
      std::ofstream out(path, std::ios::binary);
      out << "foobar";
    }
    CHECK(io::fnv1a64_file(path) == 0x85944171f73967e8ull);
    std::filesystem::remove(path);
  }

  TEST_CASE("manifest lists outputs with hashes and echoes the config") {
    const std::string out1 = temp_path("mckv_io_out1.csv");
    {
      std::ofstream out(out1, std::ios::binary);
      out << "foobar";
    }
    const std::string manifest = temp_path("mckv_io_manifest.json");
    const std::vector<std::string> files{out1};
    io::write_manifest(manifest, "{\"kind\": \"poc\", \"seed\": 7}", 1.25, files);

    const auto doc = nlohmann::json::parse(slurp(manifest));
    CHECK(doc["build"].get<std::string>() == io::build_id());
    CHECK(doc["elapsed_seconds"].get<double>() == 1.25);
    CHECK(doc["config"]["seed"].get<int>() == 7);
    REQUIRE(doc["outputs"].size() == 1);
    CHECK(doc["outputs"][0]["file"].get<std::string>() == "mckv_io_out1.csv");
    CHECK(doc["outputs"][0]["bytes"].get<std::size_t>() == 6);
    CHECK(doc["outputs"][0]["fnv1a64"].get<std::string>() == "85944171f73967e8");

    CHECK_THROWS_AS(io::write_manifest(manifest, "not json", 0.0, files), IoError);
    std::filesystem::remove(out1);
    std::filesystem::remove(manifest);
  }

  TEST_CASE("loglog plot emits framed svg with the expected elements") {
    const std::string path = temp_path("mckv_io_plot.svg");
    io::PlotSeries series;
    series.label = "E1(N)";
    series.x = {64, 256, 1024, 4096};
    series.y = {0.21, 0.105, 0.052, 0.026};
    series.yerr = {0.02, 0.01, 0.005, 0.002};
    io::PlotLine fitted{"fitted", -0.5, -0.6, "#b23a1f", false};
    io::PlotLine theory{"theory", -0.5, -0.7, "#3a7d2c", true};
    const io::PlotSeries all_series[] = {series};
    const io::PlotLine all_lines[] = {fitted, theory};
    io::write_loglog_plot(path, "rate <fit>", "N", "E1", all_series, all_lines);

    const std::string svg = slurp(path);
    CHECK(svg.find("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\"") !=
          std::string::npos);
    CHECK(svg.find("rate &lt;fit&gt;") != std::string::npos);   // escaped title
    CHECK(svg.find("<polyline points=") != std::string::npos);  // data series
    CHECK(svg.find("stroke-dasharray") != std::string::npos);   // dashed theory line
    CHECK(svg.find("E1(N)") != std::string::npos);              // legend entry
    CHECK(svg.rfind("</svg>\n") == svg.size() - 7);
    // four markers, one per point
    std::size_t circles = 0;
    for (std::size_t at = svg.find("<circle"); at != std::string::npos;
         at = svg.find("<circle", at + 1)) {
      ++circles;
    }
    CHECK(circles == 4);

    // byte determinism
    const std::string first = svg;
    io::write_loglog_plot(path, "rate <fit>", "N", "E1", all_series, all_lines);
    CHECK(slurp(path) == first);
    std::filesystem::remove(path);

    const io::PlotSeries empty_series[] = {io::PlotSeries{}};
    CHECK_THROWS_AS(
        io::write_loglog_plot(path, "t", "x", "y", empty_series, {}),
        ParameterError);
  }

  TEST_CASE("event log round-trips bitwise") {
    const auto model = LevyModel::compound_poisson(
        {{{0.4}, 2.0}, {{-1.6}, 0.7}, {{2.5}, 0.4}}, 1, 1.5);
    const TimeGrid grid = TimeGrid::uniform(1.0, 8);
    const SeedLineage lineage{42, purpose::kNoise, 3, 17};
    const NoiseRealization noise =
        synthesize_realization(model, grid, lineage, SmallJumpScheme::ExactTotal, 2.0);

    const std::string path = temp_path("mckv_io_events.bin");
    io::write_event_log(path, noise);
    const NoiseRealization back = io::read_event_log(path);

    CHECK(back.dim == noise.dim);
    CHECK(*back.grid == *noise.grid);
    CHECK(back.lineage.master == noise.lineage.master);
    CHECK(back.lineage.purpose == noise.lineage.purpose);
    CHECK(back.lineage.replication == noise.lineage.replication);
    CHECK(back.lineage.particle == noise.lineage.particle);
    CHECK(back.truncation_level == noise.truncation_level);
    CHECK(back.comp_rate == noise.comp_rate);
    CHECK(back.small == noise.small);
    REQUIRE(back.events.size() == noise.events.size());
    for (std::size_t i = 0; i < back.events.size(); ++i) {
      CHECK(back.events[i].time == noise.events[i].time);
      CHECK(back.events[i].size == noise.events[i].size);
    }

    // writing the reloaded realization reproduces the file bytes
    const std::string copy = temp_path("mckv_io_events2.bin");
    io::write_event_log(copy, back);
    CHECK(slurp(copy) == slurp(path));
    std::filesystem::remove(path);
    std::filesystem::remove(copy);
  }

  TEST_CASE("event log rejects malformed files") {
    const std::string path = temp_path("mckv_io_bad.bin");
    {
      std::ofstream out(path, std::ios::binary);
      out << "MCKVEVT1short";
    }
    CHECK_THROWS_AS(io::read_event_log(path), IoError);
    {
      std::ofstream out(path, std::ios::binary);
      out << "NOTMAGIC" << std::string(64, '\0');
    }
    CHECK_THROWS_AS(io::read_event_log(path), IoError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(io::read_event_log(temp_path("mckv_io_missing.bin")), IoError);
  }
}
