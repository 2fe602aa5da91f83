#pragma once

// Real-valued cost model for the continuous phase of the solver. Stage depth
// D is treated as "first block + (D - 1) repeated blocks", so every metric is
// a smooth function of (widths, depths) between lattice points.

#include <vector>

#include "deepmad/solver.hpp"

namespace deepmad::detail {

struct RelaxedEval {
  double objective = 0.0;
  double rho = 0.0;
  double flops = 0.0;
  double params = 0.0;
};

class RelaxedModel {
 public:
  explicit RelaxedModel(const ProblemSpec& prob);

  RelaxedEval evaluate(const std::vector<double>& widths, const std::vector<double>& depths) const;

 private:
  struct Totals {
    double count = 0.0;       // layers on the effectiveness path
    double stage_log = 0.0;   // log-width sum over the stage-entropy path
    double params = 0.0;
    double flops = 0.0;
  };

  Totals block_totals(double c_in, double c_out, int stride, int r_in) const;
  void add_layer(const ConvShape<double>& c, Totals& t) const;

  const ProblemSpec& prob_;
  std::vector<int> r_in_;   // resolution entering each stage
  std::vector<int> r_out_;  // resolution leaving each stage
  int stem_r_out_ = 0;
};

}  // namespace deepmad::detail
