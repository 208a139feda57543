#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

// Primitive real operations with their transposed derivatives. recip and log
// are partial; domain violations surface as PartialOp errors, never NaNs.

namespace chad {

struct EvalError : std::runtime_error {
  std::string kind;
  EvalError(std::string k, const std::string& msg)
      : std::runtime_error(k + ": " + msg), kind(std::move(k)) {}
};

[[noreturn]] inline void partial_op(const std::string& msg) { throw EvalError("PartialOp", msg); }

struct OpDef {
  std::string name;
  int arity;
  double (*primal)(const double*);
  // transpose(xs, d)_i = d * dop/dx_i at xs
  void (*transpose)(const double*, double, double*);
};

namespace ops_detail {

inline double p_add(const double* x) { return x[0] + x[1]; }
inline double p_mul(const double* x) { return x[0] * x[1]; }
inline double p_sub(const double* x) { return x[0] - x[1]; }
inline double p_neg(const double* x) { return -x[0]; }
inline double p_recip(const double* x) {
  if (x[0] == 0.0) partial_op("recip of 0");
  return 1.0 / x[0];
}
inline double p_sin(const double* x) { return std::sin(x[0]); }
inline double p_cos(const double* x) { return std::cos(x[0]); }
inline double p_exp(const double* x) { return std::exp(x[0]); }
inline double p_log(const double* x) {
  if (x[0] <= 0.0) partial_op("log of non-positive");
  return std::log(x[0]);
}

inline void t_add(const double*, double d, double* o) { o[0] = d; o[1] = d; }
inline void t_mul(const double* x, double d, double* o) { o[0] = d * x[1]; o[1] = d * x[0]; }
inline void t_sub(const double*, double d, double* o) { o[0] = d; o[1] = -d; }
inline void t_neg(const double*, double d, double* o) { o[0] = -d; }
inline void t_recip(const double* x, double d, double* o) {
  if (x[0] == 0.0) partial_op("recip' of 0");
  o[0] = -d / (x[0] * x[0]);
}
inline void t_sin(const double* x, double d, double* o) { o[0] = d * std::cos(x[0]); }
inline void t_cos(const double* x, double d, double* o) { o[0] = -d * std::sin(x[0]); }
inline void t_exp(const double* x, double d, double* o) { o[0] = d * std::exp(x[0]); }
inline void t_log(const double* x, double d, double* o) {
  if (x[0] <= 0.0) partial_op("log' of non-positive");
  o[0] = d / x[0];
}

} // namespace ops_detail

inline const std::vector<OpDef>& op_registry() {
  using namespace ops_detail;
  static const std::vector<OpDef> r = {
      {"add", 2, p_add, t_add},   {"mul", 2, p_mul, t_mul}, {"sub", 2, p_sub, t_sub},
      {"neg", 1, p_neg, t_neg},   {"recip", 1, p_recip, t_recip},
      {"sin", 1, p_sin, t_sin},   {"cos", 1, p_cos, t_cos}, {"exp", 1, p_exp, t_exp},
      {"log", 1, p_log, t_log},
  };
  return r;
}

inline const OpDef* find_op(const std::string& name) {
  for (const auto& o : op_registry())
    if (o.name == name) return &o;
  return nullptr;
}

inline double apply_op(const OpDef& op, const std::vector<double>& args) {
  return op.primal(args.data());
}

inline std::vector<double> apply_op_transpose(const OpDef& op, const std::vector<double>& primals,
                                              double d) {
  std::vector<double> out((size_t)op.arity);
  op.transpose(primals.data(), d, out.data());
  return out;
}

} // namespace chad
