#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffex/metrics.hpp"
#include "diffex/png.hpp"

namespace diffex {

struct MetricsRow {
  std::size_t example_id = 0;
  std::uint64_t seed = 0;
  std::string mode;
  double closeness = 0.0;
  double validity = 0.0;
  double extra_bpd = 0.0;
  std::string verdict;
};

constexpr const char* kMetricsCsvHeader = "example_id,seed,mode,closeness,validity,extra_bpd,verdict";

namespace detail {

inline std::string fmt10(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace detail

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = kMetricsCsvHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.example_id);
    out += ',';
    out += std::to_string(r.seed);
    out += ',';
    out += r.mode;
    out += ',';
    out += detail::fmt10(r.closeness);
    out += ',';
    out += detail::fmt10(r.validity);
    out += ',';
    out += detail::fmt10(r.extra_bpd);
    out += ',';
    out += r.verdict;
    out += '\n';
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_text_file: cannot open " + path);
  out << content;
  if (!out) throw std::runtime_error("write_text_file: write failed for " + path);
}

inline std::vector<MetricsRow> parse_metrics_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("parse_metrics_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsCsvHeader)
    throw std::runtime_error("parse_metrics_csv: bad header in " + path);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[7];
    for (int i = 0; i < 7; ++i)
      if (!std::getline(ss, f[i], ','))
        throw std::runtime_error("parse_metrics_csv: malformed row in " + path + ": " + line);
    MetricsRow r;
    r.example_id = std::stoull(f[0]);
    r.seed = std::stoull(f[1]);
    r.mode = f[2];
    r.closeness = std::stod(f[3]);
    r.validity = std::stod(f[4]);
    r.extra_bpd = std::stod(f[5]);
    r.verdict = f[6];
    rows.push_back(std::move(r));
  }
  return rows;
}

inline nlohmann::json aggregate_json(const std::vector<MetricsRow>& rows) {
  nlohmann::json agg = nlohmann::json::object();
  if (rows.empty()) return agg;
  std::vector<double> c, v, e;
  for (const auto& r : rows) {
    c.push_back(r.closeness);
    v.push_back(r.validity);
    e.push_back(r.extra_bpd);
  }
  const auto put = [&](const char* name, const Aggregate& a) {
    agg[name] = {{"mean", a.mean}, {"std", a.std}};
  };
  put("closeness", aggregate(c));
  put("validity", aggregate(v));
  put("extra_bpd", aggregate(e));
  return agg;
}

// Fixed-shape summary document. `config_echo` is whatever configuration the
// caller wants recorded next to the numbers.
inline nlohmann::json summary_json(const std::vector<MetricsRow>& rows, const Thresholds& thr,
                                   const nlohmann::json& config_echo) {
  nlohmann::json verdicts = {{"counterfactual", 0}, {"adversarial", 0}, {"affirmative", 0},
                             {"none", 0}};
  for (const auto& r : rows) verdicts[r.verdict] = verdicts.value(r.verdict, 0) + 1;
  return nlohmann::json{{"format_version", 1},
                        {"count", rows.size()},
                        {"aggregates", aggregate_json(rows)},
                        {"std_convention", "population"},
                        {"thresholds", {{"delta", thr.delta}, {"epsilon_bpd", thr.epsilon_bpd}}},
                        {"verdict_counts", verdicts},
                        {"config", config_echo}};
}

// Tile sheet: the original first, then the generated examples, row-wrapped.
// Each tile carries a 3-pixel bar underneath: gray for the original, green
// when the example's predicted class hit the target, red otherwise.
inline Image report_grid(const Image& original, const std::vector<Image>& generated,
                         const std::vector<bool>& predicted_hit) {
  if (generated.size() != predicted_hit.size())
    throw std::invalid_argument("report_grid: flag count mismatch");
  const std::size_t tile_w = original.width, tile_h = original.height;
  for (const auto& g : generated)
    if (g.width != tile_w || g.height != tile_h)
      throw std::invalid_argument("report_grid: tile size mismatch");

  const std::size_t tiles = 1 + generated.size();
  const std::size_t per_row = std::min<std::size_t>(6, tiles);
  const std::size_t rows = (tiles + per_row - 1) / per_row;
  const std::size_t cell_w = tile_w + 1, cell_h = tile_h + 4;

  Image sheet;
  sheet.width = per_row * cell_w + 1;
  sheet.height = rows * cell_h + 1;
  sheet.rgb.assign(sheet.width * sheet.height * 3, 255);

  const auto blit = [&](std::size_t idx, const Image& tile, unsigned char br, unsigned char bg,
                        unsigned char bb) {
    const std::size_t ox = 1 + (idx % per_row) * cell_w;
    const std::size_t oy = 1 + (idx / per_row) * cell_h;
    for (std::size_t y = 0; y < tile_h; ++y)
      for (std::size_t x = 0; x < tile_w; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          sheet.at(ox + x, oy + y, c) = tile.at(x, y, c);
    for (std::size_t y = tile_h; y < tile_h + 3; ++y)
      for (std::size_t x = 0; x < tile_w; ++x) {
        sheet.at(ox + x, oy + y, 0) = br;
        sheet.at(ox + x, oy + y, 1) = bg;
        sheet.at(ox + x, oy + y, 2) = bb;
      }
  };

  blit(0, original, 128, 128, 128);
  for (std::size_t i = 0; i < generated.size(); ++i)
    blit(1 + i, generated[i], predicted_hit[i] ? 40 : 200, predicted_hit[i] ? 170 : 40, 40);
  return sheet;
}

// metrics.csv + summary.json always; grid.png only when there is something
// to show. Returns the list of files written (paths inside out_dir).
inline std::vector<std::string> emit_report(const std::string& out_dir,
                                            const std::vector<MetricsRow>& rows,
                                            const Thresholds& thr,
                                            const nlohmann::json& config_echo,
                                            const Image* original = nullptr,
                                            const std::vector<Image>& generated = {},
                                            const std::vector<bool>& predicted_hit = {}) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("emit_report: cannot create " + out_dir + ": " + ec.message());

  std::vector<std::string> written;
  const std::string csv_path = out_dir + "/metrics.csv";
  write_text_file(csv_path, metrics_csv(rows));
  written.push_back(csv_path);

  const std::string json_path = out_dir + "/summary.json";
  write_text_file(json_path, summary_json(rows, thr, config_echo).dump(2) + "\n");
  written.push_back(json_path);

  if (original != nullptr && !generated.empty()) {
    const std::string grid_path = out_dir + "/grid.png";
    write_png(grid_path, report_grid(*original, generated, predicted_hit));
    written.push_back(grid_path);
  }
  return written;
}

}  // namespace diffex
