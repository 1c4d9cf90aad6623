#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "caal/cli.hpp"

using namespace caal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tiny_config_json(const std::string& out_dir, int rounds = 2) {
  std::ostringstream ss;
  ss << R"({
  "data": {"source": "synthetic", "family": "hetero_sine_1d", "n": 220, "seed": 4,
           "group_size": 1, "val_fraction": 0.15, "test_fraction": 0.15, "initial_labelled": 24},
  "model": {"trunk": [8, 8], "members": 2,
            "schedule": {"max_epochs": 6, "batch_size": 32, "lr0": 0.003}},
  "objective": {"kind": "decoupled", "lambda": 0.1},
  "strategy": {"kind": "caal", "beta": 1.0},
  "loop": {"rounds": )"
     << rounds << R"(, "batch": 8, "base_seed": 21},
  "output_dir": ")"
     << out_dir << R"("
})";
  return ss.str();
}

int run(const std::vector<std::string>& args, std::string* out_text = nullptr,
        std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  if (out_text != nullptr) *out_text = out.str();
  if (err_text != nullptr) *err_text = err.str();
  return code;
}

}  // namespace

TEST_CASE("cli run produces the learning curve and snapshot", "[cli][slow]") {
  TempDir dir("caal_cli_run");
  const std::string cfg = dir.file("config.json");
  write_file(cfg, tiny_config_json(dir.file("out")));

  std::string out;
  REQUIRE(run({"run", cfg}, &out) == 0);
  REQUIRE(out.find("run complete") != std::string::npos);

  const std::string curve = read_file(dir.file("out/learning_curve.csv"));
  std::size_t lines = 0;
  for (char c : curve) lines += c == '\n';
  REQUIRE(lines == 4);  // header + rounds 0..2 with rounds=2
  REQUIRE(fs::exists(dir.file("out/ensemble.txt")));

  SECTION("reruns are byte-identical") {
    const std::string first = curve;
    REQUIRE(run({"run", cfg}) == 0);
    REQUIRE(read_file(dir.file("out/learning_curve.csv")) == first);
  }
  SECTION("the config file itself is untouched") {
    const std::string before = read_file(cfg);
    REQUIRE(run({"run", cfg}) == 0);
    REQUIRE(read_file(cfg) == before);
  }
}

TEST_CASE("cli run rejects malformed configs without partial outputs", "[cli]") {
  TempDir dir("caal_cli_bad");
  const std::string cfg = dir.file("config.json");

  SECTION("malformed json") {
    write_file(cfg, "{ not json");
    std::string err;
    REQUIRE(run({"run", cfg}, nullptr, &err) == kExitConfig);
    REQUIRE(err.find("kind=config") != std::string::npos);
    REQUIRE_FALSE(fs::exists(dir.file("out")));
  }
  SECTION("unknown keys are config errors") {
    write_file(cfg, R"({"data": {"source": "synthetic", "n": 100, "initial_labelled": 5,
                       "bogus_key": 1},
                      "model": {}, "loop": {"rounds": 1, "batch": 2}, "output_dir": "x"})");
    REQUIRE(run({"run", cfg}) == kExitConfig);
  }
  SECTION("missing config file is an io error") {
    REQUIRE(run({"run", dir.file("absent.json")}) == kExitIo);
  }
  SECTION("loop keys T and B are synonyms for rounds and batch") {
    write_file(cfg, R"({"data": {"source": "synthetic", "family": "hetero_sine_1d", "n": 220,
                        "seed": 4, "group_size": 1, "val_fraction": 0.15, "test_fraction": 0.15,
                        "initial_labelled": 24},
                      "model": {"trunk": [8], "members": 1,
                                "schedule": {"max_epochs": 2, "batch_size": 32, "lr0": 0.003}},
                      "loop": {"T": 1, "B": 8, "base_seed": 21},
                      "output_dir": ")" +
                        dir.file("out_tb") + R"("})");
    REQUIRE(run({"run", cfg}) == 0);
    REQUIRE(fs::exists(dir.file("out_tb/learning_curve.csv")));
    write_file(cfg, R"({"data": {"source": "synthetic", "n": 100, "initial_labelled": 5},
                      "model": {}, "loop": {"T": 1, "rounds": 1, "batch": 2}, "output_dir": "x"})");
    REQUIRE(run({"run", cfg}) == kExitConfig);
  }
  SECTION("unknown subcommand is a config error") {
    REQUIRE(run({"frobnicate"}) == kExitConfig);
  }
}

TEST_CASE("cli sweep", "[cli][slow]") {
  TempDir dir("caal_cli_sweep");
  const std::string cfg = dir.file("config.json");
  write_file(cfg, tiny_config_json(dir.file("out"), 1));

  SECTION("beta sweep writes one subdirectory per value plus a summary") {
    REQUIRE(run({"sweep", cfg, "--param", "beta", "--values", "0,1,10"}) == 0);
    REQUIRE(fs::exists(dir.file("out/beta_0/learning_curve.csv")));
    REQUIRE(fs::exists(dir.file("out/beta_1/learning_curve.csv")));
    REQUIRE(fs::exists(dir.file("out/beta_10/learning_curve.csv")));
    const std::string summary = read_file(dir.file("out/sweep_summary.csv"));
    std::size_t lines = 0;
    for (char c : summary) lines += c == '\n';
    REQUIRE(lines == 4);
    REQUIRE(summary.rfind("beta,best_r2,best_rmse,config_hash\n", 0) == 0);
  }
  SECTION("lambda sweep covers the stable range") {
    REQUIRE(run({"sweep", cfg, "--param", "lambda", "--values", "0.01,0.1,0.5"}) == 0);
    REQUIRE(fs::exists(dir.file("out/lambda_0.01/learning_curve.csv")));
    REQUIRE(fs::exists(dir.file("out/lambda_0.5/learning_curve.csv")));
  }
  SECTION("duplicate values are rejected") {
    REQUIRE(run({"sweep", cfg, "--param", "beta", "--values", "1,1"}) == kExitConfig);
  }
  SECTION("unknown parameter is rejected") {
    REQUIRE(run({"sweep", cfg, "--param", "gamma", "--values", "1"}) == kExitConfig);
  }
}

TEST_CASE("cli compare", "[cli][slow]") {
  TempDir dir("caal_cli_compare");
  const std::string cfg = dir.file("config.json");
  write_file(cfg, tiny_config_json(dir.file("out"), 1));

  REQUIRE(run({"compare", cfg, "--strategies", "random,qbc"}) == 0);
  REQUIRE(fs::exists(dir.file("out/random/learning_curve.csv")));
  REQUIRE(fs::exists(dir.file("out/qbc/learning_curve.csv")));
  const std::string summary = read_file(dir.file("out/compare_summary.csv"));
  REQUIRE(summary.find("random,") != std::string::npos);
  REQUIRE(summary.find("qbc,") != std::string::npos);

  SECTION("unknown strategy rejected") {
    REQUIRE(run({"compare", cfg, "--strategies", "bogus"}) == kExitConfig);
  }
}

TEST_CASE("cli chi and vr", "[cli]") {
  TempDir dir("caal_cli_aero");

  SECTION("fully external population prints chi = 0") {
    const std::string pop = dir.file("pop.csv");
    write_file(pop, "BC,SO4\n1,0\n0,1\n");
    std::string out;
    REQUIRE(run({"chi", pop}, &out) == 0);
    REQUIRE(out.find("chi = 0\n") != std::string::npos);
  }
  SECTION("fully internal population prints chi = 1") {
    const std::string pop = dir.file("pop.csv");
    write_file(pop, "BC,SO4\n0.5,0.5\n0.5,0.5\n");
    std::string out;
    REQUIRE(run({"chi", pop}, &out) == 0);
    REQUIRE(out.find("chi = 1") != std::string::npos);
  }
  SECTION("grouping merges columns before the index") {
    const std::string pop = dir.file("pop.csv");
    write_file(pop, "BC,SO4,NO3\n1,0.5,0.5\n1,0.25,0.75\n");
    std::string merged_out, plain_out;
    REQUIRE(run({"chi", pop, "--grouping", "BC;SO4,NO3"}, &merged_out) == 0);
    REQUIRE(run({"chi", pop}, &plain_out) == 0);
    // merged: every particle is (1, 1) -> fully internal
    REQUIRE(merged_out.find("chi = 1") != std::string::npos);
    REQUIRE(plain_out != merged_out);
  }
  SECTION("vr fixture prints 7") {
    const std::string dia = dir.file("dia.csv");
    write_file(dia, "Dp,Dc\n2,1\n");
    std::string out;
    REQUIRE(run({"vr", dia}, &out) == 0);
    REQUIRE(out.find("vr = 7\n") != std::string::npos);
  }
  SECTION("vr with bad data is a data error") {
    const std::string dia = dir.file("dia.csv");
    write_file(dia, "Dp,Dc\n1,2\n");
    REQUIRE(run({"vr", dia}) == kExitData);
  }
}

TEST_CASE("cli output root override", "[cli][slow]") {
  TempDir dir("caal_cli_root");
  const std::string cfg = dir.file("config.json");
  write_file(cfg, tiny_config_json("nested/out", 1));

  setenv("CAAL_OUTPUT_ROOT", dir.path.c_str(), 1);
  const int code = run({"run", cfg});
  unsetenv("CAAL_OUTPUT_ROOT");
  REQUIRE(code == 0);
  REQUIRE(fs::exists(dir.file("nested/out/learning_curve.csv")));
}
