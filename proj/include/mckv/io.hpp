#pragma once
// Artifact emitters: RFC-4180 CSV, the JSON run manifest, static SVG plots,
// and the binary event-log format for noise realizations.  Everything here
// writes deterministic bytes: doubles are formatted with %.17g (round-trip
// exact), so identical inputs give identical files.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mckv/levy.hpp"

namespace mckv::io {

// %.17g: shortest form that still round-trips a double through text.
std::string format_double(double v);

// RFC 4180 field quoting: wraps in quotes when the field holds a comma,
// quote, or line break; embedded quotes double.
std::string csv_escape(const std::string& field);

// Whole-file write; throws IoError on open or short-write failure.
void write_text_file(const std::string& path, const std::string& text);

// Row-oriented CSV writer, CRLF line endings.  Numeric cells use
// format_double.  Throws IoError if the file cannot be opened or written.
class CsvFile {
 public:
  explicit CsvFile(const std::string& path);
  ~CsvFile();
  CsvFile(const CsvFile&) = delete;
  CsvFile& operator=(const CsvFile&) = delete;

  CsvFile& cell(const std::string& text);
  CsvFile& cell(const char* text);
  CsvFile& cell(double v);
  CsvFile& cell(std::size_t v);
  void end_row();
  void close();  // flushes; write errors surface here at the latest

 private:
  std::string path_;
  std::string row_;
  bool row_open_ = false;
  void* handle_ = nullptr;
};

// FNV-1a, 64-bit; the manifest's content hash.
std::uint64_t fnv1a64(std::span<const unsigned char> data);
std::uint64_t fnv1a64_file(const std::string& path);

// Compile-time build identifier (git describe at configure time).
std::string build_id();

// Run manifest: config echo (JSON text), build id, elapsed wall seconds, and
// one entry per output file with byte size and content hash.  `config_json`
// must be a valid JSON document; it is embedded, not re-escaped.
void write_manifest(const std::string& path, const std::string& config_json,
                    double elapsed_seconds, std::span<const std::string> output_files);

// One plotted point series on log-log axes, with optional error bars
// (yerr empty or same length as y).  Coordinates are raw values; the plot
// applies log10.  Nonpositive values are skipped.
struct PlotSeries {
  std::string label;
  std::vector<double> x, y, yerr;
  std::string color = "#1f6fb2";
};

// Straight guide line in natural-log space: ln y = slope ln x + intercept,
// drawn across the data's x-range.
struct PlotLine {
  std::string label;
  double slope = 0.0;
  double intercept = 0.0;
  std::string color = "#b23a1f";
  bool dashed = false;
};

// Static SVG 1.1, 640 x 480: framed log-log axes with decade ticks, the
// series as marked polylines with error bars, guide lines, and a legend.
void write_loglog_plot(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       std::span<const PlotSeries> series,
                       std::span<const PlotLine> lines);

// Same layout with a linear y axis, for laws of the form y = a ln x + b
// (guide lines are straight here too).
void write_semilogx_plot(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         std::span<const PlotSeries> series,
                         std::span<const PlotLine> lines);

// Binary event log, little-endian, magic "MCKVEVT1": grid nodes, lineage,
// truncation level, compensation rates, small increments, and the event
// list of one realization.  read_event_log round-trips write_event_log
// bitwise.  Throws IoError on malformed files.
void write_event_log(const std::string& path, const NoiseRealization& noise);
NoiseRealization read_event_log(const std::string& path);

}  // namespace mckv::io
