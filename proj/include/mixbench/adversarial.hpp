#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mixbench/data.hpp"
#include "mixbench/models.hpp"

namespace mixbench {

// l-infinity attack settings. iterations == 1 is FGSM.
struct AttackConfig {
  double epsilon = 0.0;
  std::size_t iterations = 1;
  double step_size = -1.0;  // negative: epsilon for FGSM, epsilon/2 for PGD
  double clamp_lo = 0.0;
  double clamp_hi = 1.0;

  double effective_step() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
};

enum class AttackKind { Fgsm, Pgd };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view text);

// Gradient of the mean cross-entropy w.r.t. the input, with normalization in
// eval mode. The model's parameter gradients are left untouched.
template <typename Real>
Tensor<Real> input_gradient(Model<Real>& model, const Tensor<Real>& x, std::span<const std::int32_t> labels);

// x + epsilon * sign(grad), clamped. sign(0) = 0.
template <typename Real>
Tensor<Real> fgsm(Model<Real>& model, const Tensor<Real>& x, std::span<const std::int32_t> labels,
                  const AttackConfig& cfg);

// `iterations` sign steps, each followed by projection onto the epsilon ball
// around x and clamping. No random start.
template <typename Real>
Tensor<Real> pgd(Model<Real>& model, const Tensor<Real>& x, std::span<const std::int32_t> labels,
                 const AttackConfig& cfg);

// FGSM when cfg.iterations == 1, PGD otherwise.
template <typename Real>
Tensor<Real> attack(Model<Real>& model, const Tensor<Real>& x, std::span<const std::int32_t> labels,
                    const AttackConfig& cfg);

// Clips `candidate` into [x - eps, x + eps] and the clamp range, with the
// bound computed so that |result - x| <= epsilon holds exactly (in double).
template <typename Real>
void project_linf(std::span<Real> candidate, std::span<const Real> x, double epsilon, double clamp_lo,
                  double clamp_hi);

struct RobustnessRow {
  double epsilon = 0;
  double accuracy = 0;
  double clean_accuracy = 0;
  std::string attack;
  std::string model_mode;
};

// One row per epsilon (ascending, starting at 0). PGD uses `pgd_iterations`.
template <typename Real>
std::vector<RobustnessRow> robustness_curve(Model<Real>& model, const Dataset& data,
                                            std::span<const double> epsilons, AttackKind kind,
                                            std::size_t pgd_iterations = 2, std::size_t batch_size = 32);

void write_robustness_csv(const std::vector<RobustnessRow>& rows, const std::filesystem::path& path);

// (acc_smoothed - acc_random) / acc_random, per row.
std::vector<double> relative_improvement(const std::vector<RobustnessRow>& smoothed,
                                         const std::vector<RobustnessRow>& random);

}  // namespace mixbench
