// End-to-end checks of the command-line tool: each subcommand is exercised
// as a real subprocess, pinning the documented exit codes, output files, and
// determinism guarantees. LADDER_CLI_PATH is injected by the build.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out << text;
}

/// Scratch directory removed when the test ends.
struct TempDir {
  fs::path path;
  TempDir() {
    std::mt19937_64 rng(std::random_device{}());
    path = fs::temp_directory_path() / ("ladder_cli_test_" + std::to_string(rng()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& name) const { return path / name; }
};

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

/// Runs the installedless CLI binary with `args`, capturing both streams.
CliResult run_cli(const std::string& args, const TempDir& dir) {
  const fs::path out_path = dir / "stdout.capture";
  const fs::path err_path = dir / "stderr.capture";
  const std::string cmd = std::string(LADDER_CLI_PATH) + " " + args + " > " +
                          out_path.string() + " 2> " + err_path.string();
  const int status = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WEXITSTATUS(status);
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  return result;
}

/// Shared tiny-model flags that keep subprocess training fast.
const std::string kTinyFlags =
    " --base-dim 4 --lifted-dim 8 --experts 4 --top-k 2 --steps 2 --anchors 4"
    " --epochs 2 --batch-size 8 --lr 0.01";

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("gen-data is deterministic in the seed and honors --size") {
  TempDir dir;
  const fs::path a = dir / "a.tsv";
  const fs::path b = dir / "b.tsv";
  const fs::path c = dir / "c.tsv";

  CHECK(run_cli("gen-data --kind keyword-class --size 40 --seed 9 --out " + a.string(), dir)
            .exit_code == 0);
  CHECK(run_cli("gen-data --kind keyword-class --size 40 --seed 9 --out " + b.string(), dir)
            .exit_code == 0);
  CHECK(run_cli("gen-data --kind keyword-class --size 40 --seed 10 --out " + c.string(), dir)
            .exit_code == 0);

  const std::string text_a = slurp(a);
  CHECK(text_a == slurp(b));
  CHECK(text_a != slurp(c));
  CHECK(count_lines(text_a) == 40);

  const CliResult cc = run_cli(
      "gen-data --kind char-continuation --size 25 --seed 4 --out " + a.string(), dir);
  CHECK(cc.exit_code == 0);
  CHECK(count_lines(slurp(a)) == 25);
}

TEST_CASE("train emits checkpoint and run CSV, bitwise reproducibly") {
  TempDir dir;
  const fs::path data = dir / "data.tsv";
  REQUIRE(run_cli("gen-data --kind keyword-class --size 40 --seed 9 --out " + data.string(),
                  dir)
              .exit_code == 0);

  const std::string train_args = "train --data " + data.string() + kTinyFlags + " --seed 5";
  const CliResult first = run_cli(train_args + " --out " + (dir / "m1.ckpt").string() +
                                      " --run-csv " + (dir / "r1.csv").string(),
                                  dir);
  CHECK(first.exit_code == 0);
  CHECK(first.err.find("trained 2 epochs") != std::string::npos);

  const CliResult second = run_cli(train_args + " --out " + (dir / "m2.ckpt").string() +
                                       " --run-csv " + (dir / "r2.csv").string(),
                                   dir);
  CHECK(second.exit_code == 0);

  CHECK(slurp(dir / "m1.ckpt") == slurp(dir / "m2.ckpt"));
  const std::string run_csv = slurp(dir / "r1.csv");
  CHECK(run_csv == slurp(dir / "r2.csv"));
  CHECK(run_csv.substr(0, run_csv.find('\n')) ==
        "epoch,task_loss,drift_loss,balance_loss,heldout_success,entropy");
  CHECK(count_lines(run_csv) == 3);  // header + one row per epoch
}

TEST_CASE("config file sets options and explicit flags override it") {
  TempDir dir;
  const fs::path data = dir / "data.tsv";
  REQUIRE(run_cli("gen-data --kind keyword-class --size 40 --seed 9 --out " + data.string(),
                  dir)
              .exit_code == 0);

  spit(dir / "opts.cfg",
       "# tiny model\nbase_dim = 4\nlifted_dim = 8\nn_experts = 4\ntop_k = 2\n"
       "n_anchors = 4\nepochs = 7\nbatch_size = 8\nlearning_rate = 0.01\nseed = 5\n");

  // --epochs 2 must beat the file's epochs = 7; everything else comes from
  // the file. Three run-record rows = header + 2 epochs.
  const CliResult r = run_cli("train --data " + data.string() + " --config " +
                                  (dir / "opts.cfg").string() + " --epochs 2 --out " +
                                  (dir / "m.ckpt").string() + " --run-csv " +
                                  (dir / "r.csv").string(),
                              dir);
  CHECK(r.exit_code == 0);
  CHECK(count_lines(slurp(dir / "r.csv")) == 3);

  spit(dir / "bad.cfg", "base_dlm = 4\n");
  const CliResult bad = run_cli("train --data " + data.string() + " --config " +
                                    (dir / "bad.cfg").string(),
                                dir);
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("base_dlm") != std::string::npos);
}

TEST_CASE("eval loads a checkpoint and reports deterministic metrics") {
  TempDir dir;
  const fs::path data = dir / "data.tsv";
  const fs::path ckpt = dir / "m.ckpt";
  REQUIRE(run_cli("gen-data --kind keyword-class --size 40 --seed 9 --out " + data.string(),
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("train --data " + data.string() + kTinyFlags + " --seed 5 --out " +
                      ckpt.string() + " --run-csv " + (dir / "r.csv").string(),
                  dir)
              .exit_code == 0);

  const std::string eval_args =
      "eval --checkpoint " + ckpt.string() + " --data " + data.string() + " --seed 11";
  const CliResult first = run_cli(eval_args + " --out " + (dir / "e1.csv").string(), dir);
  CHECK(first.exit_code == 0);
  const CliResult second = run_cli(eval_args + " --out " + (dir / "e2.csv").string(), dir);
  CHECK(second.exit_code == 0);

  const std::string metrics = slurp(dir / "e1.csv");
  CHECK(metrics == slurp(dir / "e2.csv"));
  CHECK(metrics.substr(0, metrics.find('\n')) ==
        "metrics_version,self_bleu,distinct1,distinct2,task_success,entropy,utilization");
  CHECK(count_lines(metrics) == 2);

  // A token the checkpoint has never seen is a data error, not a crash.
  spit(dir / "alien.tsv", "kw000 brandnewtoken\tclass000\nkw000 kw001\tclass001\n");
  const CliResult alien = run_cli("eval --checkpoint " + ckpt.string() + " --data " +
                                      (dir / "alien.tsv").string() + " --out " +
                                      (dir / "e3.csv").string(),
                                  dir);
  CHECK(alien.exit_code == 2);
  CHECK(alien.err.find("brandnewtoken") != std::string::npos);
}

TEST_CASE("gradcheck passes at the documented threshold and fails below it") {
  TempDir dir;
  const CliResult pass = run_cli("gradcheck --seed 4", dir);
  CHECK(pass.exit_code == 0);
  CHECK(pass.err.find("max relative gradient error") != std::string::npos);

  const CliResult fail = run_cli("gradcheck --seed 4 --threshold 1e-20", dir);
  CHECK(fail.exit_code == 3);
  CHECK(fail.err.find("gradient check failed") != std::string::npos);
}

TEST_CASE("usage errors exit with code 1") {
  TempDir dir;
  CHECK(run_cli("frobnicate", dir).exit_code == 1);
  CHECK(run_cli("train", dir).exit_code == 1);  // --data is required
  CHECK(run_cli("gen-data --kind keyword-class --size 40 --out x.tsv --bogus-flag 3", dir)
            .exit_code == 1);
  CHECK(run_cli("gen-data --kind mystery --size 40 --out " + (dir / "x.tsv").string(), dir)
            .exit_code == 1);
}

TEST_CASE("data errors exit with code 2") {
  TempDir dir;
  const CliResult missing = run_cli("train --data " + (dir / "absent.tsv").string(), dir);
  CHECK(missing.exit_code == 2);

  spit(dir / "bad.tsv", "no tab separator here\n");
  const CliResult malformed = run_cli("train --data " + (dir / "bad.tsv").string(), dir);
  CHECK(malformed.exit_code == 2);
  CHECK(malformed.err.find("missing tab separator") != std::string::npos);
}

TEST_CASE("ablate sweeps five variants and honors --seeds") {
  TempDir dir;
  const fs::path data = dir / "data.tsv";
  REQUIRE(run_cli("gen-data --kind keyword-class --size 40 --seed 3 --out " + data.string(),
                  dir)
              .exit_code == 0);

  const CliResult r = run_cli("ablate --data " + data.string() + kTinyFlags +
                                  " --seeds 3 --runs-csv " + (dir / "runs.csv").string() +
                                  " --summary-csv " + (dir / "sum.csv").string(),
                              dir);
  CHECK(r.exit_code == 0);
  CHECK(r.err.find("15 of 15 runs succeeded") != std::string::npos);

  const std::string runs = slurp(dir / "runs.csv");
  CHECK(count_lines(runs) == 16);  // header + 5 variants x 3 seeds
  CHECK(runs.find("Full LADDER,1,") != std::string::npos);
  CHECK(runs.find("Only-DimMap,3,") != std::string::npos);
  CHECK(count_lines(slurp(dir / "sum.csv")) == 6);  // header + 5 variants
}

TEST_CASE("route-stats emits one row per (step, expert)") {
  TempDir dir;
  const fs::path data = dir / "data.tsv";
  const fs::path ckpt = dir / "m.ckpt";
  REQUIRE(run_cli("gen-data --kind keyword-class --size 40 --seed 9 --out " + data.string(),
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("train --data " + data.string() + kTinyFlags + " --seed 5 --out " +
                      ckpt.string() + " --run-csv " + (dir / "r.csv").string(),
                  dir)
              .exit_code == 0);

  const CliResult r = run_cli("route-stats --checkpoint " + ckpt.string() + " --data " +
                                  data.string() + " --out " + (dir / "routes.csv").string(),
                              dir);
  CHECK(r.exit_code == 0);

  const std::string csv = slurp(dir / "routes.csv");
  CHECK(csv.substr(0, csv.find('\n')) == "step,expert,selections,evaluations,mean_gate");
  CHECK(count_lines(csv) == 1 + 2 * 4);  // T=2 steps x 4 experts
  CHECK(csv.find("1,0,") != std::string::npos);
  CHECK(csv.find("2,3,") != std::string::npos);

  // Selections per step must sum to rows x top_k = 40 x 2.
  std::istringstream stream(csv);
  std::string line;
  std::getline(stream, line);
  std::size_t selections = 0;
  std::size_t evaluations = 0;
  while (std::getline(stream, line)) {
    std::istringstream fields(line);
    std::string step, expert, sel, eval;
    std::getline(fields, step, ',');
    std::getline(fields, expert, ',');
    std::getline(fields, sel, ',');
    std::getline(fields, eval, ',');
    selections += std::stoul(sel);
    evaluations += std::stoul(eval);
  }
  CHECK(selections == 2 * 40 * 2);   // steps x rows x top_k
  CHECK(evaluations == selections);  // sparse dispatch never over-evaluates
}
