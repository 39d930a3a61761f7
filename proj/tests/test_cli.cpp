#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  auto p = fs::temp_directory_path() / "ergo_cli_test";
  fs::create_directories(p);
  return p;
}

int ergo(const std::string& args, const fs::path& stdout_file = {}) {
  std::string cmd = std::string(ERGO_CLI_PATH) + " " + args;
  cmd += stdout_file.empty() ? " > /dev/null 2>&1" : " > " + stdout_file.string() + " 2>/dev/null";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

}  // namespace

TEST_CASE("usage errors exit with code 3") {
  CHECK(ergo("") == 3);
  CHECK(ergo("no-such-command") == 3);
  CHECK(ergo("sample --sampler nonsense") == 3);
  CHECK(ergo("estimate --sampler kaleidoscope:k=2,d=1 --formula \"(rel E x0 x1)\"") == 3);
  CHECK(ergo("estimate --formula \"(forall x (rel R0 x x))\"") == 3);
  CHECK(ergo("sample --format xml") == 3);
}

TEST_CASE("estimate prints a CSV report with the seed") {
  auto out = scratch() / "est.csv";
  REQUIRE(ergo("estimate --sampler kaleidoscope:k=2,d=1 --formula \"(rel R0 x0 x1)\" --trials 4000 --format csv",
               out) == 0);
  auto text = slurp(out);
  CHECK(text.rfind("statistic,estimate,stderr,trials,seed_hex\n", 0) == 0);
  CHECK(text.find(",4000,243f6a8885a308d313198a2e03707344") != std::string::npos);
}

TEST_CASE("statistical flags exit with code 1") {
  CHECK(ergo("dissoc --sampler mixture:p1=0.2,p2=0.8 --phi \"(rel R x0 x1)\" --psi \"(rel R x0 x1)\" --trials 20000") ==
        1);
  CHECK(ergo("dissoc --sampler kaleidoscope:k=2,d=2 --phi \"(rel R0 x0 x1)\" --psi \"(rel R0 x0 x1)\" --trials 20000") ==
        0);
  CHECK(ergo("invariance --sampler kaleidoscope:k=2,d=2 --formula \"(rel R0 x0 x1)\" --perm 1,0 --trials 20000") == 0);
}

TEST_CASE("exact violations exit with code 2") {
  CHECK(ergo("coherence --sampler broken-raw --trials 200") == 2);
  CHECK(ergo("coherence --sampler broken-superset --trials 200") == 2);
  CHECK(ergo("coherence --sampler maxgraph:d=4 --trials 200") == 0);
}

TEST_CASE("roots reads a structure written by sample") {
  auto m = scratch() / "m.jsonl";
  REQUIRE(ergo("sample --sampler maxgraph:d=6 -n 12", m) == 0);
  auto out = scratch() / "roots.json";
  CHECK(ergo("roots --input " + m.string() + " --arity 2", out) == 0);
  CHECK(slurp(out).find("\"passed\":true") != std::string::npos);
}

TEST_CASE("runs with --out write a manifest that replays byte for byte") {
  auto dir = scratch();
  auto out = dir / "collide.jsonl";
  REQUIRE(ergo("collide --sampler blowup:d=3 --trials 3000 --out " + out.string()) == 0);
  auto manifest = fs::path(out.string() + ".manifest.json");
  REQUIRE(fs::exists(manifest));
  CHECK(slurp(manifest).find("blowup:d=3") != std::string::npos);
  CHECK(ergo("replay " + manifest.string()) == 0);
  CHECK_FALSE(fs::exists(out.string() + ".replay"));

  std::ofstream(out, std::ios::app) << "tampered\n";
  CHECK(ergo("replay " + manifest.string()) == 2);
}

TEST_CASE("limit commands chain through the build manifest") {
  auto dir = scratch();
  auto build = dir / "build.json";
  REQUIRE(ergo("build-limit --stages 8 --out " + build.string()) == 0);
  CHECK(slurp(build).find("\"passed\": true") != std::string::npos);
  auto sample = dir / "limit.jsonl";
  CHECK(ergo("limit-sample --manifest " + build.string() + " -n 6 --depth 10", sample) == 0);
  CHECK(slurp(sample).find("\"domain_size\":6") != std::string::npos);
  CHECK(ergo("rescale --manifest " + build.string() + " --stage 4 --depth 8 --weight 3/4 --trials 2000") == 0);
  CHECK(ergo("rescale --manifest " + build.string() + " --stage 4 --weight 0") == 3);
}

TEST_CASE("morleyize reads a theory file") {
  auto dir = scratch();
  auto th = dir / "theory.txt";
  std::ofstream(th) << "(forall x (exists y (rel E x y)))\n\n(rel Q)\n";
  auto out = dir / "theory.json";
  REQUIRE(ergo("morleyize --theory " + th.string(), out) == 0);
  auto text = slurp(out);
  CHECK(text.find("\"pi2minus\": true") != std::string::npos);
  CHECK(text.find("R[(exists y (rel E x y))]") != std::string::npos);
}
