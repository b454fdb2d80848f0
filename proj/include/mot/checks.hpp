#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mot/assoc.hpp"
#include "mot/tensor.hpp"

namespace mot {

struct GradCheckOptions {
    double h = 1e-5;
    double tol = 1e-4;
    int64_t max_probes = 8;  // elements probed per tensor
};

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    int64_t probes = 0;
    bool ok = false;
};

/// Central finite differences against the reverse-mode gradient. loss_fn must
/// rebuild its graph from the given leaves on every call; leaf data is
/// perturbed in place and restored.
GradCheckResult finite_diff_check(const std::string& name,
                                  const std::function<Tensor()>& loss_fn,
                                  const std::vector<Tensor>& leaves,
                                  GradCheckOptions opt = {});

/// Exhaustive minimum assignment cost (all rows matched when M <= N, all
/// columns otherwise). Independent of the Hungarian implementation.
double brute_force_assignment_cost(const Matrix& cost);

/// The named gradient-check battery covering every differentiable op and the
/// composed training losses.
std::vector<GradCheckResult> run_standard_gradient_checks();

struct VerifySummary {
    int passed = 0;
    int failed = 0;
    bool ok() const { return failed == 0; }
};

/// Built-in self-check suite: gradient battery, assignment oracle, metric
/// hand-worked cases, bank lifecycle, memory-ratio bounds. One line per
/// check.
VerifySummary run_verification(std::ostream& out);

}  // namespace mot
