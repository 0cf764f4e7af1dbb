#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dmdlab/io.hpp"
#include "dmdlab/tools/cli.hpp"

using namespace dmdlab;
using namespace dmdlab::tools;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dmdlab_cli_" + name);
  fs::remove_all(p);
  return p;
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path tiny_config(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path p = dir / "tiny.json";
  std::ofstream(p) << R"({
  "teacher": {"hidden": [16, 16], "iters": 200, "batch": 64},
  "optim": {"batch": 16},
  "gan": {"iters": 10, "head_hidden": [8]},
  "dmd": {"iters": 10},
  "eval": {"samples": 200, "teacher_steps": 10}
})";
  return p;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"run"}).code == kExitUsage);
  CHECK(cli({"verify", "nonsense"}).code == kExitUsage);
}

TEST_CASE("missing config file exits with 2 and names it") {
  const fs::path out = scratch("missing");
  const Result r = cli({"run", "-c", "/nonexistent/cfg.json", "-o", out.string(), "-q"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("/nonexistent/cfg.json") != std::string::npos);
  REQUIRE(fs::exists(out / "error.json"));
  CHECK(read_json(out / "error.json")["exit_code"] == kExitUsage);
}

TEST_CASE("unknown override key exits with 2") {
  const fs::path dir = scratch("badkey");
  const fs::path cfg = tiny_config(dir);
  const Result r = cli({"run", "-c", cfg.string(), "-o", (dir / "out").string(), "--set", "gan.nope=1", "-q"});
  CHECK(r.code == kExitUsage);
  CHECK(read_json(dir / "out" / "error.json")["field"] == "gan.nope");
}

TEST_CASE("run echoes overrides, refuses a used directory, and feeds sample and report") {
  const fs::path dir = scratch("run");
  const fs::path cfg = tiny_config(dir);
  const fs::path out = dir / "out";
  const Result r = cli({"run", "-c", cfg.string(), "-o", out.string(), "--set", "optim.lr=0.0002",
                        "--seed", "5", "-q"});
  REQUIRE(r.code == kExitOk);
  const auto echoed = read_json(out / "config.json");
  CHECK(echoed["optim"]["lr"] == 0.0002);
  CHECK(echoed["seed"] == 5);
  CHECK(echoed["gan"]["iters"] == 10);
  for (const char* f : {"gan.csv", "dmd.csv", "eval.csv", "samples.csv", "report.json", "student.bin"})
    CHECK_MESSAGE(fs::exists(out / f), f);

  CHECK(cli({"run", "-c", cfg.string(), "-o", out.string(), "-q"}).code == kExitUsage);

  const fs::path samples = dir / "samples";
  CHECK(cli({"sample", "--checkpoint", (out / "checkpoints" / "final").string(), "-n", "50", "-o",
             samples.string()})
            .code == kExitOk);
  CHECK(read_samples_csv(samples / "samples.csv").cols() == 50);

  const Result rep = cli({"report", out.string()});
  CHECK(rep.code == kExitOk);
  CHECK(fs::exists(out / "summary.json"));
}

TEST_CASE("resume from a damaged checkpoint exits with 2") {
  const fs::path dir = scratch("resume");
  const fs::path cfg = tiny_config(dir);
  const fs::path ck = dir / "ck";
  fs::create_directories(ck);
  std::ofstream(ck / "manifest.json") << "{}";
  const Result r = cli({"run", "-c", cfg.string(), "-o", (dir / "out").string(), "--resume", ck.string(), "-q"});
  CHECK(r.code == kExitUsage);
}

TEST_CASE("verify prints a table and exits 0 when every check passes") {
  const Result r = cli({"verify", "scores", "quadrature"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("PASS") != std::string::npos);
}
