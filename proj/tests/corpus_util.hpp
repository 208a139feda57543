#pragma once

#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "chad/parse.hpp"
#include "chad/typecheck.hpp"
#include "chad/value.hpp"

// Corpus loading and deterministic point sampling for the test suites.

namespace corpus {

struct Entry {
  std::string file;
  chad::Program prog;
  std::string domain = "any"; // "any" or "positive"
  bool ho = false;
  bool arrays = false;
  std::map<std::string, int> lens;
  std::map<std::string, long long> ints;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<Entry> load() {
  std::string dir = CORPUS_DIR;
  auto manifest = nlohmann::json::parse(read_file(dir + "/manifest.json"));
  std::vector<Entry> out;
  for (const auto& p : manifest.at("programs")) {
    Entry e;
    e.file = p.at("file").get<std::string>();
    e.prog = chad::parse_program(read_file(dir + "/" + e.file));
    chad::typecheck(e.prog);
    if (p.contains("domain")) e.domain = p.at("domain").get<std::string>();
    if (p.contains("ho")) e.ho = p.at("ho").get<bool>();
    if (p.contains("arrays")) e.arrays = p.at("arrays").get<bool>();
    if (p.contains("lens"))
      for (auto& [k, v] : p.at("lens").items()) e.lens[k] = v.get<int>();
    if (p.contains("ints"))
      for (auto& [k, v] : p.at("ints").items()) e.ints[k] = v.get<long long>();
    out.push_back(std::move(e));
  }
  return out;
}

inline double draw(const Entry& e, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  double v = u(rng);
  if (e.domain == "positive") return v;
  // away from zero on either side, keeping sign functions off their boundary
  return (rng() & 1) ? v : -v;
}

inline chad::Value sample_var(const Entry& e, const std::string& name, const chad::Ty& ty,
                              std::mt19937_64& rng) {
  using namespace chad;
  switch (ty.k) {
    case TyKind::Real: return v_real(draw(e, rng));
    case TyKind::Int: return v_int(e.ints.count(name) ? e.ints.at(name) : 0);
    case TyKind::Unit: return v_unit();
    case TyKind::Prod: {
      Value a = sample_var(e, name, ty.a[0], rng);
      Value b = sample_var(e, name, ty.a[1], rng);
      return v_pair(std::move(a), std::move(b));
    }
    case TyKind::Array: {
      int n = e.lens.count(name) ? e.lens.at(name) : 4;
      std::vector<Value> elems;
      for (int i = 0; i < n; ++i) elems.push_back(sample_var(e, name, ty.a[0], rng));
      return v_arr(std::move(elems));
    }
    default: throw std::runtime_error("unsupported input type in corpus");
  }
}

inline std::vector<chad::Value> sample_point(const Entry& e, std::mt19937_64& rng) {
  std::vector<chad::Value> out;
  for (const auto& b : e.prog.args) out.push_back(sample_var(e, b.name, b.ty, rng));
  return out;
}

} // namespace corpus
