// chadc: check, run and differentiate programs in the little array language,
// compare gradients against the forward/finite-difference oracles, and run
// the cost-model regressions over the generated program families.
//
// stdout carries machine-readable JSON for grad/run/compare-oracle/bench;
// diagnostics go to stderr. Exit codes: 0 success, 1 user error (parse or
// type), 2 runtime evaluation error, 3 failed bench rule.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "chad/bench.hpp"
#include "chad/bigstack.hpp"
#include "chad/io.hpp"
#include "chad/parse.hpp"
#include "chad/pretty.hpp"

using namespace chad;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit(const ojson& j, const std::string& out_path) {
  std::string text = j.dump();
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream out(out_path);
    out << text << "\n";
  }
}

struct Options {
  std::string command;
  std::string program_path;
  std::string mode = "monadic";
  std::string point_json;
  std::string seed_json = "1";
  std::string family;
  std::string sizes = "64..16384";
  std::string rule = "flat-ratio";
  std::string out_path;
  bool print = false;
  int points = 10;
};

int run_command(const Options& o) {
  PipeMode mode;
  if (!pipe_mode_from_string(o.mode, mode)) {
    std::cerr << "unknown mode '" << o.mode << "'\n";
    return 1;
  }

  if (o.command == "bench") {
    Family fam;
    if (!family_from_string(o.family, fam)) {
      std::cerr << "unknown family '" << o.family << "'\n";
      return 1;
    }
    Rule rule;
    if (!rule_from_string(o.rule, rule)) {
      std::cerr << "unknown rule '" << o.rule << "'\n";
      return 1;
    }
    BenchReport rep = regression_check(fam, mode, parse_sizes(o.sizes), rule);
    emit(report_to_json(rep), o.out_path);
    return rep.pass ? 0 : 3;
  }

  Program prog;
  try {
    prog = parse_program(read_file(o.program_path));
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  }
  Ty result_ty;
  try {
    result_ty = typecheck(prog);
  } catch (const TypeError& e) {
    std::cerr << "type error: " << e.what() << "\n";
    return 1;
  }

  if (o.command == "check") {
    std::cerr << "ok: " << pretty_ty(result_ty) << "\n";
    return 0;
  }

  if (o.command == "transform") {
    Program p = prog;
    if (mode == PipeMode::Defunctionalise) p = defunctionalise(closure_convert(p));
    if (mode == PipeMode::ClosedChad) p = closure_convert(p);
    TransformConfig cfg{chad_mode_of(mode), true};
    TermPtr d = chad_transform(cfg, p.args, p.body);
    if (o.print) std::cout << pretty_term(d1_context(p.args), d) << "\n";
    return 0;
  }

  ojson point_j = o.point_json.empty() ? ojson::object() : ojson::parse(o.point_json);
  std::vector<Value> point = point_from_json(prog.args, point_j);

  if (o.command == "run") {
    auto [v, cost] = eval_source(prog.args, prog.body, point);
    ojson j;
    j["value"] = value_to_json(v);
    j["cost"] = cost;
    emit(j, o.out_path);
    return 0;
  }

  if (o.command == "grad") {
    Pipeline pl = prepare_pipeline(mode, prog.args, prog.body);
    auto [primal, pcost] = eval_primal_half(pl, point);
    Cot seed = seed_from_json(pl.result_ty, primal, ojson::parse(o.seed_json));
    GradOutcome g = run_pipeline(pl, point, seed);
    emit(grad_to_json(prog.args, point, g.env), o.out_path);
    return 0;
  }

  if (o.command == "compare-oracle") {
    std::vector<double> fwd = grad_forward(prog.args, prog.body, point);
    std::vector<double> fd = grad_fd(prog.args, prog.body, point);
    Pipeline pl = prepare_pipeline(mode, prog.args, prog.body);
    GradOutcome g = run_pipeline(pl, point, c_r(1.0));
    std::vector<double> mine = densify_env(prog.args, point, g.env);
    ojson j;
    j["program"] = o.program_path;
    j["max_rel_forward"] = max_rel_err(mine, fwd);
    j["max_rel_fd"] = max_rel_err(mine, fd);
    emit(j, o.out_path);
    return 0;
  }

  std::cerr << "unknown command '" << o.command << "'\n";
  return 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"cost-instrumented reverse-mode differentiation"};
  app.require_subcommand(1);

  Options o;
  auto add_common = [&](CLI::App* sub, bool needs_program) {
    if (needs_program) sub->add_option("program", o.program_path, "program file")->required();
    sub->add_option("--mode", o.mode,
                    "naive-dense|naive-treemap|monadic|naive-ho|defunctionalise|closure-chad");
    sub->add_option("--out", o.out_path, "write JSON output to a file");
  };

  auto* check = app.add_subcommand("check", "parse and typecheck a program");
  add_common(check, true);

  auto* run = app.add_subcommand("run", "evaluate a program at a point");
  add_common(run, true);
  run->add_option("--point", o.point_json, "input values as JSON")->required();

  auto* grad = app.add_subcommand("grad", "environment gradient at a point");
  add_common(grad, true);
  grad->add_option("--point", o.point_json, "input values as JSON")->required();
  grad->add_option("--seed", o.seed_json, "result cotangent (number or flat array)");

  auto* transform = app.add_subcommand("transform", "differentiate and print the code");
  add_common(transform, true);
  transform->add_flag("--print", o.print, "print the transformed term");

  auto* cmp = app.add_subcommand("compare-oracle", "max relative error against the oracles");
  add_common(cmp, true);
  cmp->add_option("--point", o.point_json, "input values as JSON")->required();

  auto* bench = app.add_subcommand("bench", "cost regression over a program family");
  add_common(bench, false);
  bench->add_option("--family", o.family,
                    "deep-let|fanout|t_magic|t_n|case-ladder|array-buildfold")
      ->required();
  bench->add_option("--sizes", o.sizes, "size range a..b (powers of two double)");
  bench->add_option("--rule", o.rule, "flat-ratio|growth|doubling|linear");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  o.command = app.get_subcommands().front()->get_name();

  return run_on_big_stack([&] {
    try {
      return run_command(o);
    } catch (const ParseError& e) {
      std::cerr << "parse error: " << e.what() << "\n";
      return 1;
    } catch (const TypeError& e) {
      std::cerr << "type error: " << e.what() << "\n";
      return 1;
    } catch (const TransformError& e) {
      std::cerr << "transform error: " << e.what() << "\n";
      return 1;
    } catch (const EvalError& e) {
      std::cerr << "evaluation error: " << e.what() << "\n";
      return 2;
    } catch (const ojson::exception& e) {
      std::cerr << "json error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  });
}
