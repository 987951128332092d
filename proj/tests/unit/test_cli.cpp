#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "feddti/bench.hpp"
#include "feddti/federation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(FEDDTI_BENCH_EXE) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Workdir {
  fs::path dir;
  explicit Workdir(const std::string& name) : dir(fs::temp_directory_path() / ("feddti_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  fs::path operator/(const std::string& p) const { return dir / p; }

  fs::path config(const json& j, const std::string& name = "config.json") const {
    std::ofstream(dir / name) << j.dump();
    return dir / name;
  }
};

json small_config(const std::string& strategy) {
  return {{"dataset", {{"synthetic", {{"n_drugs", 20}, {"n_proteins", 10}, {"n_records", 400}, {"latent_dim", 3},
                                      {"noise_sd", 0.1}, {"seed", 1}}}}},
          {"strategy", strategy},
          {"client_counts", {2, 4}},
          {"mixing_levels", {0.0, 1.0}},
          {"model", {{"kind", "two_tower_mlp"}, {"embedding_dim", 4}, {"hidden_dim", 5}}},
          {"train", {{"epochs", 1}, {"learning_rate", 0.05}, {"batch_size", 32}}},
          {"rounds", 2},
          {"repeats", 1},
          {"base_seed", 7}};
}

}  // namespace

TEST_CASE("exit codes") {
  Workdir w("exit");
  CHECK(run("") == 1);
  CHECK(run("--help") == 0);
  CHECK(run("frobnicate") == 1);
  CHECK(run("grid --config /nonexistent.json") == 1);
  auto bad = small_config("iid");
  bad["bogus"] = 1;
  CHECK(run("grid --config " + w.config(bad).string()) == 1);
  auto quantity = small_config("quantity");
  quantity["client_counts"] = {1};
  CHECK(run("grid --config " + w.config(quantity).string() + " --out " + (w / "q").string()) == 1);
  auto missing = small_config("iid");
  missing["dataset"] = {{"path", (w / "missing.csv").string()}};
  CHECK(run("compare --config " + w.config(missing).string() + " --out " + (w / "m").string()) == 2);
  CHECK(run("report --from " + (w / "nothing").string()) == 2);
}

TEST_CASE("synth writes a loadable dataset and its truth") {
  Workdir w("synth");
  REQUIRE(run("synth --n-drugs 7 --n-proteins 4 --n-records 50 --seed 3 --out " + w.dir.string()) == 0);
  const auto ds = feddti::load_csv(w / "dataset.csv");
  CHECK(ds.size() == 50);
  const auto truth = json::parse(slurp(w / "truth.json"));
  CHECK(truth.at("drug_ids").size() == 7);
  CHECK(truth.at("seed") == 3);
}

TEST_CASE("partition, fed and ensemble share one manifest") {
  Workdir w("pipeline");
  const auto cfg = w.config(small_config("entity_protein"));
  const auto part = w / "part";
  REQUIRE(run("partition --config " + cfg.string() + " --out " + part.string()) == 0);
  CHECK(fs::exists(part / "partition.csv"));
  const auto manifest = json::parse(slurp(part / "partition.json"));

  const auto fed = w / "fed";
  REQUIRE(run("fed --config " + cfg.string() + " --partition " + part.string() + " --out " + fed.string()) == 0);
  CHECK(slurp(fed / "history.csv").rfind("round,global_mse\n1,", 0) == 0);
  CHECK(fs::exists(fed / "model.params"));
  const auto fed_json = json::parse(slurp(fed / "fed.json"));
  CHECK(fed_json.at("partition_hash") == manifest.at("hash"));

  const auto ens = w / "ens";
  REQUIRE(run("ensemble --config " + cfg.string() + " --partition " + part.string() + " --out " + ens.string()) == 0);
  const auto ens_json = json::parse(slurp(ens / "ensemble.json"));
  CHECK(ens_json.at("partition_hash") == manifest.at("hash"));
  CHECK(ens_json.at("total_epochs") == 2);
  CHECK(fs::exists(ens / "ensemble" / "manifest.json"));
}

TEST_CASE("grid and report") {
  Workdir w("grid");
  const auto cfg = w.config(small_config("entity_drug"));
  const auto a = w / "a", b = w / "b";
  REQUIRE(run("grid --config " + cfg.string() + " --workers 1 --out " + a.string()) == 0);
  REQUIRE(run("--workers 3 grid --config " + cfg.string() + " --out " + b.string()) == 0);
  CHECK(slurp(a / "grid.csv") == slurp(b / "grid.csv"));
  CHECK(slurp(a / "cells.csv") == slurp(b / "cells.csv"));
  CHECK(slurp(a / "grid.csv").rfind("setup,row_key,col_key,repeats,mean_mse,std_mse,pct_change\n", 0) == 0);

  const auto rebuilt = w / "rebuilt";
  REQUIRE(run("report --from " + a.string() + " --out " + rebuilt.string()) == 0);
  CHECK(slurp(rebuilt / "grid.csv") == slurp(a / "grid.csv"));

  const auto reseeded = w / "reseeded";
  REQUIRE(run("grid --config " + cfg.string() + " --seed 8 --out " + reseeded.string()) == 0);
  CHECK(slurp(reseeded / "cells.csv") != slurp(a / "cells.csv"));
}

TEST_CASE("compare") {
  Workdir w("compare");
  const auto cfg = w.config(small_config("iid"));
  REQUIRE(run("compare --config " + cfg.string() + " --out " + w.dir.string()) == 0);
  const auto rows = feddti::read_compare_csv(w / "compare.csv");
  CHECK(rows.size() == 4);
  CHECK(run("report --compare " + (w / "compare.csv").string()) == 0);
}
