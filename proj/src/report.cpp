#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "feddti/bench.hpp"
#include "feddti/error.hpp"
#include "text.hpp"

namespace feddti {

using nlohmann::json;

const GridCell* GridReport::find(std::string_view row, std::string_view col) const noexcept {
  for (const auto& c : cells) {
    if (c.row_key == row && c.col_key == col) return &c;
  }
  return nullptr;
}

GridReport assemble_grid(std::string setup, std::vector<std::string> row_keys, std::vector<std::string> col_keys,
                         std::string reference_row, std::string reference_col, std::vector<RepeatRecord> runs,
                         json provenance) {
  auto position = [](const std::vector<std::string>& keys, const std::string& k) {
    const auto it = std::find(keys.begin(), keys.end(), k);
    if (it == keys.end()) throw InputError("unknown grid key `" + k + "`");
    return static_cast<std::size_t>(it - keys.begin());
  };
  std::stable_sort(runs.begin(), runs.end(), [&](const RepeatRecord& a, const RepeatRecord& b) {
    const auto ra = position(row_keys, a.row_key), rb = position(row_keys, b.row_key);
    if (ra != rb) return ra < rb;
    const auto ca = position(col_keys, a.col_key), cb = position(col_keys, b.col_key);
    if (ca != cb) return ca < cb;
    return a.repeat < b.repeat;
  });

  GridReport report;
  report.setup = std::move(setup);
  for (std::size_t i = 0; i < runs.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < runs.size() && runs[j].row_key == runs[i].row_key && runs[j].col_key == runs[i].col_key) {
      sum += runs[j].final_mse;
      ++j;
    }
    const auto n = j - i;
    GridCell cell{runs[i].row_key, runs[i].col_key, n, sum / static_cast<double>(n), 0.0, 0.0};
    if (n > 1) {
      double ss = 0.0;
      for (std::size_t k = i; k < j; ++k) ss += (runs[k].final_mse - cell.mean_mse) * (runs[k].final_mse - cell.mean_mse);
      cell.std_mse = std::sqrt(ss / static_cast<double>(n - 1));
    }
    report.cells.push_back(std::move(cell));
    i = j;
  }

  const auto* ref = report.find(reference_row, reference_col);
  if (!report.cells.empty()) {
    if (ref == nullptr) {
      throw Error("grid has no cell at the reference (" + reference_row + ", " + reference_col + ")");
    }
    const double ref_mse = ref->mean_mse;
    if (!(ref_mse > 0.0)) throw Error("reference cell MSE must be positive");
    for (auto& c : report.cells) c.pct_change = 100.0 * (c.mean_mse - ref_mse) / ref_mse;
  }
  report.row_keys = std::move(row_keys);
  report.col_keys = std::move(col_keys);
  report.reference_row = std::move(reference_row);
  report.reference_col = std::move(reference_col);
  report.runs = std::move(runs);
  report.provenance = std::move(provenance);
  return report;
}

void write_grid_csv(const GridReport& report, std::ostream& out) {
  out << "setup,row_key,col_key,repeats,mean_mse,std_mse,pct_change\n";
  for (const auto& c : report.cells) {
    out << report.setup << ',' << c.row_key << ',' << c.col_key << ',' << c.repeats << ','
        << text::format_shortest(c.mean_mse) << ',' << text::format_shortest(c.std_mse) << ','
        << text::format_shortest(c.pct_change) << '\n';
  }
}

void write_cells_csv(const GridReport& report, std::ostream& out) {
  out << "row_key,col_key,repeat,seed,final_mse\n";
  for (const auto& r : report.runs) {
    out << r.row_key << ',' << r.col_key << ',' << r.repeat << ',' << r.seed << ','
        << text::format_shortest(r.final_mse) << '\n';
  }
}

void write_compare_csv(const ComparisonReport& report, std::ostream& out) {
  out << "distribution,client_count,ensemble_mse,federated_mse,pct_difference\n";
  for (const auto& r : report.rows) {
    out << r.distribution << ',' << r.client_count << ',' << text::format_shortest(r.ensemble_mse) << ','
        << text::format_shortest(r.federated_mse) << ',' << text::format_shortest(r.pct_difference) << '\n';
  }
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed for " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
}

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path, std::string_view header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || text::strip_cr(line) != header) {
    throw InputError(path.string() + ":1: expected header `" + std::string(header) + "`");
  }
  const auto width = text::split(header).size();
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = text::strip_cr(line);
    if (row.empty()) continue;
    const auto fields = text::split(row);
    if (fields.size() != width) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                       " fields");
    }
    rows.emplace_back(fields.begin(), fields.end());
  }
  return rows;
}

double need_double(const std::string& s, const std::filesystem::path& path) {
  const auto v = text::parse_double(s);
  if (!v) throw InputError(path.string() + ": bad number `" + s + "`");
  return *v;
}

template <class Int>
Int need_int(const std::string& s, const std::filesystem::path& path) {
  const auto v = text::parse_int<Int>(s);
  if (!v) throw InputError(path.string() + ": bad integer `" + s + "`");
  return *v;
}

}  // namespace

std::vector<std::filesystem::path> write_reports(const GridReport& report, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  std::ostringstream grid, cells;
  write_grid_csv(report, grid);
  write_cells_csv(report, cells);
  const json meta = {
      {"setup", report.setup},
      {"row_keys", report.row_keys},
      {"col_keys", report.col_keys},
      {"reference_cell", {{"row_key", report.reference_row}, {"col_key", report.reference_col}}},
      {"provenance", report.provenance},
  };
  const std::vector<std::filesystem::path> paths = {out_dir / "grid.csv", out_dir / "cells.csv",
                                                    out_dir / "grid.json"};
  write_file(paths[0], grid.str());
  write_file(paths[1], cells.str());
  write_file(paths[2], meta.dump(2) + "\n");
  return paths;
}

std::vector<std::filesystem::path> write_reports(const ComparisonReport& report,
                                                 const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  std::ostringstream csv;
  write_compare_csv(report, csv);
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"distribution", r.distribution},
                    {"client_count", r.client_count},
                    {"federated_partition_hash", r.federated_partition_hash},
                    {"ensemble_partition_hash", r.ensemble_partition_hash}});
  }
  const json meta = {{"rows", rows}, {"provenance", report.provenance}};
  const std::vector<std::filesystem::path> paths = {out_dir / "compare.csv", out_dir / "compare.json"};
  write_file(paths[0], csv.str());
  write_file(paths[1], meta.dump(2) + "\n");
  return paths;
}

std::vector<RepeatRecord> read_cells_csv(const std::filesystem::path& path) {
  std::vector<RepeatRecord> out;
  for (const auto& f : read_csv_rows(path, "row_key,col_key,repeat,seed,final_mse")) {
    out.push_back({f[0], f[1], need_int<std::size_t>(f[2], path), need_int<std::uint64_t>(f[3], path),
                   need_double(f[4], path)});
  }
  return out;
}

std::vector<ComparisonRow> read_compare_csv(const std::filesystem::path& path) {
  std::vector<ComparisonRow> out;
  for (const auto& f :
       read_csv_rows(path, "distribution,client_count,ensemble_mse,federated_mse,pct_difference")) {
    ComparisonRow r;
    r.distribution = f[0];
    r.client_count = need_int<std::size_t>(f[1], path);
    r.ensemble_mse = need_double(f[2], path);
    r.federated_mse = need_double(f[3], path);
    r.pct_difference = need_double(f[4], path);
    out.push_back(std::move(r));
  }
  return out;
}

GridReport read_grid_report(const std::filesystem::path& dir) {
  std::ifstream in(dir / "grid.json", std::ios::binary);
  if (!in) throw InputError("cannot open " + (dir / "grid.json").string());
  json meta;
  try {
    meta = json::parse(in);
    return assemble_grid(meta.at("setup").get<std::string>(), meta.at("row_keys").get<std::vector<std::string>>(),
                         meta.at("col_keys").get<std::vector<std::string>>(),
                         meta.at("reference_cell").at("row_key").get<std::string>(),
                         meta.at("reference_cell").at("col_key").get<std::string>(), read_cells_csv(dir / "cells.csv"),
                         meta.value("provenance", json::object()));
  } catch (const json::exception& e) {
    throw InputError((dir / "grid.json").string() + ": " + e.what());
  }
}

}  // namespace feddti
