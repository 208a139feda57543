#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "json.hpp"

using namespace std::string_literals;

namespace {

struct CmdResult {
  int code;
  std::string out;
};

CmdResult run_cmd(const std::string& cmd) {
  std::string full = cmd + " 2>/dev/null";
  FILE* p = popen(full.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
  int status = pclose(p);
  return {WEXITSTATUS(status), out};
}

std::string chadc() {
  const char* bin = std::getenv("CHADC_BIN");
  REQUIRE(bin != nullptr);
  return bin;
}

std::string corpus(const std::string& f) { return std::string(CORPUS_DIR) + "/" + f; }

std::string write_tmp(const std::string& name, const std::string& text) {
  std::string path = "/tmp/" + name;
  std::ofstream out(path);
  out << text;
  return path;
}

} // namespace

TEST_CASE("grad emits the gradient as JSON keyed by variable") {
  auto r = run_cmd(chadc() + " grad " + corpus("mul2.chad") +
                   " --mode monadic --point '{\"x\":3,\"y\":2}' --seed 1");
  REQUIRE(r.code == 0);
  REQUIRE(r.out == "{\"x\":2.0,\"y\":3.0}\n");
}

TEST_CASE("every mode agrees on the command line") {
  for (std::string m : {"naive-dense"s, "naive-treemap"s, "monadic"s}) {
    auto r = run_cmd(chadc() + " grad " + corpus("mul2.chad") + " --mode " + m +
                     " --point '{\"x\":3,\"y\":2}'");
    REQUIRE(r.code == 0);
    REQUIRE(r.out == "{\"x\":2.0,\"y\":3.0}\n");
  }
  for (std::string m : {"naive-ho"s, "defunctionalise"s, "closure-chad"s}) {
    auto r = run_cmd(chadc() + " grad " + corpus("ho_capture.chad") + " --mode " + m +
                     " --point '{\"x\":3,\"z\":5}'");
    REQUIRE(r.code == 0);
    REQUIRE(r.out == "{\"x\":5.0,\"z\":3.0}\n");
  }
}

TEST_CASE("check accepts the corpus and rejects ill-typed programs") {
  auto ok = run_cmd(chadc() + " check " + corpus("array_dot.chad"));
  REQUIRE(ok.code == 0);
  std::string bad = write_tmp("bad.chad", "(program (args (x Real)) (fst x))");
  auto r = run_cmd(chadc() + " check " + bad);
  REQUIRE(r.code == 1);
  std::string unparsable = write_tmp("unparsable.chad", "(program (args (x Real)) (op add x");
  REQUIRE(run_cmd(chadc() + " check " + unparsable).code == 1);
}

TEST_CASE("run reports the value and its exact cost") {
  auto r = run_cmd(chadc() + " run " + corpus("mul2.chad") + " --point '{\"x\":3,\"y\":2}'");
  REQUIRE(r.code == 0);
  REQUIRE(r.out == "{\"value\":6.0,\"cost\":5}\n");
}

TEST_CASE("runtime errors exit with code 2") {
  std::string part = write_tmp("part.chad", "(program (args (x Real)) (op recip x))");
  auto r = run_cmd(chadc() + " run " + part + " --point '{\"x\":0}'");
  REQUIRE(r.code == 2);
}

TEST_CASE("transform --print is deterministic and reparses") {
  auto a = run_cmd(chadc() + " transform " + corpus("poly.chad") + " --mode monadic --print");
  auto b = run_cmd(chadc() + " transform " + corpus("poly.chad") + " --mode monadic --print");
  REQUIRE(a.code == 0);
  REQUIRE(a.out == b.out);
  REQUIRE(a.out.find("evm-") != std::string::npos);
}

TEST_CASE("compare-oracle reports the max relative errors") {
  auto r = run_cmd(chadc() + " compare-oracle " + corpus("op_chain.chad") +
                   " --point '{\"x\":0.7,\"y\":1.1}'");
  REQUIRE(r.code == 0);
  auto j = nlohmann::json::parse(r.out);
  REQUIRE(j.at("max_rel_forward").get<double>() <= 1e-10);
  REQUIRE(j.at("max_rel_fd").get<double>() <= 1e-5);
}

TEST_CASE("bench exits 3 when the rule fails") {
  auto bad = run_cmd(chadc() + " bench --family t_magic --mode naive-treemap --sizes 64..512");
  REQUIRE(bad.code == 3);
  REQUIRE(bad.out.find("\"pass\":false") != std::string::npos);
  auto good = run_cmd(chadc() + " bench --family deep-let --mode monadic --sizes 64..256");
  REQUIRE(good.code == 0);
  REQUIRE(good.out.find("\"pass\":true") != std::string::npos);
}

TEST_CASE("--out writes the JSON to a file") {
  auto r = run_cmd(chadc() + " grad " + corpus("mul2.chad") +
                   " --point '{\"x\":3,\"y\":2}' --out /tmp/grad_out.json");
  REQUIRE(r.code == 0);
  REQUIRE(r.out.empty());
  std::ifstream in("/tmp/grad_out.json");
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "{\"x\":2.0,\"y\":3.0}");
}

TEST_CASE("unknown flags are errors") {
  auto r = run_cmd(chadc() + " grad " + corpus("mul2.chad") + " --point '{\"x\":1,\"y\":1}'" +
                   " --no-such-flag");
  REQUIRE(r.code == 1);
}
