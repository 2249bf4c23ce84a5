#include "mckv/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>

#include "json.hpp"
#include "mckv/errors.hpp"
#include "mckv/grid.hpp"
#include "mckv/version.hpp"

namespace mckv::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_or_throw(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("io: cannot open " + path);
  return f;
}

void write_all(std::FILE* f, const void* data, std::size_t bytes, const std::string& path) {
  if (bytes && std::fwrite(data, 1, bytes, f) != bytes) {
    throw IoError("io: short write to " + path);
  }
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

void write_text_file(const std::string& path, const std::string& text) {
  FilePtr f = open_or_throw(path, "wb");
  write_all(f.get(), text.data(), text.size(), path);
  std::FILE* raw = f.release();
  if (std::fclose(raw) != 0) throw IoError("io: close failed for " + path);
}

std::string format_double(double v) { return fmt("%.17g", v); }

std::string csv_escape(const std::string& field) {
  const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs_quotes) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

CsvFile::CsvFile(const std::string& path) : path_(path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("io: cannot open " + path);
  handle_ = f;
}

CsvFile::~CsvFile() {
  if (handle_) std::fclose(static_cast<std::FILE*>(handle_));
}

CsvFile& CsvFile::cell(const std::string& text) {
  if (row_open_) row_ += ',';
  row_ += csv_escape(text);
  row_open_ = true;
  return *this;
}

CsvFile& CsvFile::cell(const char* text) { return cell(std::string(text)); }

CsvFile& CsvFile::cell(double v) { return cell(format_double(v)); }

CsvFile& CsvFile::cell(std::size_t v) { return cell(std::to_string(v)); }

void CsvFile::end_row() {
  row_ += "\r\n";
  write_all(static_cast<std::FILE*>(handle_), row_.data(), row_.size(), path_);
  row_.clear();
  row_open_ = false;
}

void CsvFile::close() {
  if (!handle_) return;
  std::FILE* f = static_cast<std::FILE*>(handle_);
  handle_ = nullptr;
  if (std::fclose(f) != 0) throw IoError("io: close failed for " + path_);
}

std::uint64_t fnv1a64(std::span<const unsigned char> data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char b : data) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  FilePtr f = open_or_throw(path, "rb");
  std::uint64_t h = 14695981039346656037ull;
  unsigned char buf[65536];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f.get())) > 0) {
    for (std::size_t i = 0; i < got; ++i) {
      h ^= buf[i];
      h *= 1099511628211ull;
    }
  }
  if (std::ferror(f.get())) throw IoError("io: read failed for " + path);
  return h;
}

std::string build_id() { return kBuildId; }

void write_manifest(const std::string& path, const std::string& config_json,
                    double elapsed_seconds, std::span<const std::string> output_files) {
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("io: manifest config echo is not valid JSON: ") + e.what());
  }
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& file : output_files) {
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a64_file(file)));
    outputs.push_back({{"file", std::filesystem::path(file).filename().string()},
                       {"bytes", std::filesystem::file_size(file)},
                       {"fnv1a64", hex}});
  }
  const nlohmann::json doc{{"build", build_id()},
                           {"elapsed_seconds", elapsed_seconds},
                           {"config", std::move(config)},
                           {"outputs", std::move(outputs)}};
  write_text_file(path, doc.dump(2) + "\n");
}

namespace {

constexpr double kWidth = 640.0, kHeight = 480.0;
constexpr double kLeft = 70.0, kRight = 24.0, kTop = 44.0, kBottom = 58.0;

struct LogRange {
  double lo = 0.0, hi = 1.0;
  double to_unit(double v) const { return (v - lo) / (hi - lo); }
};

void expand(LogRange& r, double v) {
  r.lo = std::min(r.lo, v);
  r.hi = std::max(r.hi, v);
}

std::vector<double> decade_ticks(const LogRange& r) {
  std::vector<double> ticks;
  for (double t = std::ceil(r.lo - 1e-9); t <= r.hi + 1e-9; t += 1.0) ticks.push_back(t);
  if (ticks.size() >= 2) return ticks;
  // narrow range: four evenly spaced ticks in log space
  ticks.clear();
  for (int i = 0; i <= 3; ++i) ticks.push_back(r.lo + (r.hi - r.lo) * i / 3.0);
  return ticks;
}

std::string tick_label(double log10_v) {
  const double v = std::pow(10.0, log10_v);
  return fmt("%.3g", v);
}

std::vector<double> linear_ticks(const LogRange& r) {
  const double span = r.hi - r.lo;
  double step = std::pow(10.0, std::floor(std::log10(span / 5.0)));
  if (span / step > 10.0) step *= 2.0;
  if (span / step > 10.0) step *= 2.5;
  if (span / step > 10.0) step *= 2.0;
  std::vector<double> ticks;
  for (double t = std::ceil(r.lo / step - 1e-9) * step; t <= r.hi + 1e-9 * span;
       t += step) {
    ticks.push_back(t);
  }
  if (ticks.size() >= 2) return ticks;
  ticks.clear();
  for (int i = 0; i <= 3; ++i) ticks.push_back(r.lo + span * i / 3.0);
  return ticks;
}

void write_plot_impl(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     std::span<const PlotSeries> series, std::span<const PlotLine> lines,
                     bool log_y) {
  constexpr double kLn10 = 2.302585092994045684;
  // y values live in plot space: log10 when log_y, raw otherwise
  const auto yval = [&](double v) { return log_y ? std::log10(v) : v; };
  LogRange xr{1e300, -1e300}, yr{1e300, -1e300};
  bool any = false;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ParameterError("plot: x/y size mismatch");
    if (!s.yerr.empty() && s.yerr.size() != s.y.size()) {
      throw ParameterError("plot: yerr size mismatch");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!(s.x[i] > 0.0) || (log_y && !(s.y[i] > 0.0))) continue;
      any = true;
      expand(xr, std::log10(s.x[i]));
      expand(yr, yval(s.y[i]));
      if (!s.yerr.empty() && s.yerr[i] > 0.0) {
        expand(yr, yval(s.y[i] + s.yerr[i]));
        const double lo = s.y[i] - s.yerr[i];
        if (!log_y || lo > 0.0) expand(yr, yval(lo));
      }
    }
  }
  if (!any) throw ParameterError("plot: no positive data");
  const auto line_y = [&](const PlotLine& ln, double log10_x) {
    const double v = ln.slope * (log10_x * kLn10) + ln.intercept;
    return log_y ? v / kLn10 : v;
  };
  for (const auto& ln : lines) {
    expand(yr, line_y(ln, xr.lo));
    expand(yr, line_y(ln, xr.hi));
  }
  const double xpad = std::max(0.05 * (xr.hi - xr.lo), 0.05);
  const double ypad = log_y ? std::max(0.05 * (yr.hi - yr.lo), 0.05)
                            : std::max(0.05 * (yr.hi - yr.lo), 1e-12);
  xr.lo -= xpad;
  xr.hi += xpad;
  yr.lo -= ypad;
  yr.hi += ypad;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const auto px = [&](double log10_x) { return kLeft + xr.to_unit(log10_x) * plot_w; };
  const auto py = [&](double log10_y) {
    return kTop + (1.0 - yr.to_unit(log10_y)) * plot_h;
  };
  const auto coord = [](double v) { return fmt("%.2f", v); };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" "
         "height=\"480\" viewBox=\"0 0 640 480\">\n";
  svg += "<rect width=\"640\" height=\"480\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"320\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" "
         "text-anchor=\"middle\">" +
         xml_escape(title) + "</text>\n";

  // frame and ticks
  svg += "<rect x=\"" + coord(kLeft) + "\" y=\"" + coord(kTop) + "\" width=\"" +
         coord(plot_w) + "\" height=\"" + coord(plot_h) +
         "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  for (double t : decade_ticks(xr)) {
    const double x = px(t);
    svg += "<line x1=\"" + coord(x) + "\" y1=\"" + coord(kTop + plot_h) + "\" x2=\"" +
           coord(x) + "\" y2=\"" + coord(kTop + plot_h + 5) +
           "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + coord(x) + "\" y1=\"" + coord(kTop) + "\" x2=\"" + coord(x) +
           "\" y2=\"" + coord(kTop + plot_h) +
           "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
    svg += "<text x=\"" + coord(x) + "\" y=\"" + coord(kTop + plot_h + 18) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
           tick_label(t) + "</text>\n";
  }
  for (double t : log_y ? decade_ticks(yr) : linear_ticks(yr)) {
    const double y = py(t);
    svg += "<line x1=\"" + coord(kLeft - 5) + "\" y1=\"" + coord(y) + "\" x2=\"" +
           coord(kLeft) + "\" y2=\"" + coord(y) +
           "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + coord(kLeft) + "\" y1=\"" + coord(y) + "\" x2=\"" +
           coord(kLeft + plot_w) + "\" y2=\"" + coord(y) +
           "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
    svg += "<text x=\"" + coord(kLeft - 8) + "\" y=\"" + coord(y + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
           (log_y ? tick_label(t) : fmt("%.4g", t + 0.0)) + "</text>\n";
  }
  svg += "<text x=\"" + coord(kLeft + plot_w / 2) + "\" y=\"" + coord(kHeight - 14) +
         "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">" +
         xml_escape(x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + coord(kTop + plot_h / 2) +
         "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 18 " +
         coord(kTop + plot_h / 2) + ")\">" + xml_escape(y_label) + "</text>\n";

  // guide lines clipped to the frame by construction of the padded y-range
  for (const auto& ln : lines) {
    const double y0 = line_y(ln, xr.lo);
    const double y1 = line_y(ln, xr.hi);
    svg += "<line x1=\"" + coord(px(xr.lo)) + "\" y1=\"" + coord(py(y0)) + "\" x2=\"" +
           coord(px(xr.hi)) + "\" y2=\"" + coord(py(y1)) + "\" stroke=\"" + ln.color +
           "\" stroke-width=\"1.5\"" +
           (ln.dashed ? " stroke-dasharray=\"7,4\"" : "") + "/>\n";
  }

  for (const auto& s : series) {
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!(s.x[i] > 0.0) || (log_y && !(s.y[i] > 0.0))) continue;
      const double x = px(std::log10(s.x[i]));
      const double y = py(yval(s.y[i]));
      points += coord(x) + "," + coord(y) + " ";
      if (!s.yerr.empty() && s.yerr[i] > 0.0) {
        const double hi = py(yval(s.y[i] + s.yerr[i]));
        const double lo_v = s.y[i] - s.yerr[i];
        const double lo =
            (!log_y || lo_v > 0.0) ? py(yval(lo_v)) : kTop + plot_h;
        svg += "<line x1=\"" + coord(x) + "\" y1=\"" + coord(hi) + "\" x2=\"" + coord(x) +
               "\" y2=\"" + coord(lo) + "\" stroke=\"" + s.color +
               "\" stroke-width=\"1\"/>\n";
        svg += "<line x1=\"" + coord(x - 3) + "\" y1=\"" + coord(hi) + "\" x2=\"" +
               coord(x + 3) + "\" y2=\"" + coord(hi) + "\" stroke=\"" + s.color +
               "\" stroke-width=\"1\"/>\n";
        svg += "<line x1=\"" + coord(x - 3) + "\" y1=\"" + coord(lo) + "\" x2=\"" +
               coord(x + 3) + "\" y2=\"" + coord(lo) + "\" stroke=\"" + s.color +
               "\" stroke-width=\"1\"/>\n";
      }
    }
    if (!points.empty()) points.pop_back();
    svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + s.color +
           "\" stroke-width=\"1.5\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!(s.x[i] > 0.0) || (log_y && !(s.y[i] > 0.0))) continue;
      svg += "<circle cx=\"" + coord(px(std::log10(s.x[i]))) + "\" cy=\"" +
             coord(py(yval(s.y[i]))) + "\" r=\"3\" fill=\"" + s.color + "\"/>\n";
    }
  }

  // legend, top right inside the frame
  double ly = kTop + 16.0;
  const double lx = kLeft + plot_w - 170.0;
  const auto legend_row = [&](const std::string& color, bool dashed,
                              const std::string& label) {
    svg += "<line x1=\"" + coord(lx) + "\" y1=\"" + coord(ly - 4) + "\" x2=\"" +
           coord(lx + 24) + "\" y2=\"" + coord(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"" + (dashed ? " stroke-dasharray=\"7,4\"" : "") +
           "/>\n";
    svg += "<text x=\"" + coord(lx + 30) + "\" y=\"" + coord(ly) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + xml_escape(label) +
           "</text>\n";
    ly += 16.0;
  };
  for (const auto& s : series) legend_row(s.color, false, s.label);
  for (const auto& ln : lines) legend_row(ln.color, ln.dashed, ln.label);

  svg += "</svg>\n";
  write_text_file(path, svg);
}

}  // namespace

void write_loglog_plot(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       std::span<const PlotSeries> series,
                       std::span<const PlotLine> lines) {
  write_plot_impl(path, title, x_label, y_label, series, lines, true);
}

void write_semilogx_plot(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         std::span<const PlotSeries> series,
                         std::span<const PlotLine> lines) {
  write_plot_impl(path, title, x_label, y_label, series, lines, false);
}

namespace {

constexpr char kEventMagic[8] = {'M', 'C', 'K', 'V', 'E', 'V', 'T', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xffu);
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
  const unsigned char* p;
  const unsigned char* end;
  const std::string& path;

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - p) < n) {
      throw IoError("io: truncated event log " + path);
    }
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

}  // namespace

void write_event_log(const std::string& path, const NoiseRealization& noise) {
  std::string out;
  out.append(kEventMagic, sizeof kEventMagic);
  put_u64(out, static_cast<std::uint64_t>(noise.dim));
  const auto& nodes = noise.grid->nodes();
  put_u64(out, nodes.size());
  for (double t : nodes) put_f64(out, t);
  put_u64(out, noise.lineage.master);
  put_u64(out, noise.lineage.purpose);
  put_u64(out, noise.lineage.replication);
  put_u64(out, noise.lineage.particle);
  put_f64(out, noise.truncation_level);
  put_u64(out, noise.comp_rate.size());
  for (double v : noise.comp_rate) put_f64(out, v);
  put_u64(out, noise.small.size());
  for (double v : noise.small) put_f64(out, v);
  put_u64(out, noise.events.size());
  for (const auto& ev : noise.events) {
    put_f64(out, ev.time);
    if (ev.size.size() != static_cast<std::size_t>(noise.dim)) {
      throw ParameterError("io: event size dimension mismatch");
    }
    for (double v : ev.size) put_f64(out, v);
  }
  write_text_file(path, out);
}

NoiseRealization read_event_log(const std::string& path) {
  FilePtr f = open_or_throw(path, "rb");
  std::string data;
  unsigned char buf[65536];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f.get())) > 0) {
    data.append(reinterpret_cast<const char*>(buf), got);
  }
  if (std::ferror(f.get())) throw IoError("io: read failed for " + path);

  Reader r{reinterpret_cast<const unsigned char*>(data.data()),
           reinterpret_cast<const unsigned char*>(data.data()) + data.size(), path};
  r.need(sizeof kEventMagic);
  if (std::memcmp(r.p, kEventMagic, sizeof kEventMagic) != 0) {
    throw IoError("io: bad magic in " + path);
  }
  r.p += sizeof kEventMagic;

  NoiseRealization noise;
  const std::uint64_t dim = r.u64();
  if (dim < 1 || dim > 64) throw IoError("io: implausible dimension in " + path);
  noise.dim = static_cast<int>(dim);
  const std::uint64_t num_nodes = r.u64();
  if (num_nodes < 2) throw IoError("io: event log needs at least two grid nodes");
  r.need(num_nodes * 8);
  std::vector<double> nodes(num_nodes);
  for (auto& t : nodes) t = r.f64();
  noise.grid = std::make_shared<const TimeGrid>(TimeGrid::from_nodes(std::move(nodes)));
  noise.lineage.master = r.u64();
  noise.lineage.purpose = r.u64();
  noise.lineage.replication = r.u64();
  noise.lineage.particle = r.u64();
  noise.truncation_level = r.f64();
  const std::uint64_t comp_n = r.u64();
  if (comp_n != 0 && comp_n != dim) throw IoError("io: compensation size mismatch");
  noise.comp_rate.resize(comp_n);
  for (auto& v : noise.comp_rate) v = r.f64();
  const std::uint64_t small_n = r.u64();
  if (small_n != (num_nodes - 1) * dim) throw IoError("io: small block size mismatch");
  noise.small.resize(small_n);
  for (auto& v : noise.small) v = r.f64();
  const std::uint64_t num_events = r.u64();
  r.need(num_events * 8 * (1 + dim));
  noise.events.resize(num_events);
  for (auto& ev : noise.events) {
    ev.time = r.f64();
    ev.size.resize(dim);
    for (auto& v : ev.size) v = r.f64();
  }
  if (r.p != r.end) throw IoError("io: trailing bytes in " + path);
  return noise;
}

}  // namespace mckv::io
