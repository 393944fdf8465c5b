#include "mixbench/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "mixbench/ops.hpp"
#include "mixbench/training.hpp"

namespace mixbench {

double AttackConfig::effective_step() const {
  if (step_size >= 0) return step_size;
  return iterations <= 1 ? epsilon : epsilon / 2.0;
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0)) throw ConfigError("attack.epsilon", "must be >= 0");
  if (iterations < 1) throw ConfigError("attack.iterations", "must be >= 1");
  if (!(clamp_lo < clamp_hi)) throw ConfigError("attack.clamp", "lower bound must be below upper bound");
}

std::string to_string(AttackKind kind) { return kind == AttackKind::Fgsm ? "fgsm" : "pgd"; }

AttackKind parse_attack_kind(std::string_view text) {
  if (text == "fgsm") return AttackKind::Fgsm;
  if (text == "pgd") return AttackKind::Pgd;
  throw std::invalid_argument("unknown attack kind: " + std::string(text));
}

template <typename Real>
Tensor<Real> input_gradient(Model<Real>& model, const Tensor<Real>& x, std::span<const std::int32_t> labels) {
  Tensor<Real> input = x;
  Tape<Real> tape;
  Var<Real> in = tape.leaf(input, true);
  Var<Real> loss = cross_entropy(model.forward(in, false), labels);
  // Parameters bind as leaves too; keep their accumulated grads intact.
  std::vector<std::vector<Real>> saved;
  auto& store = model.params();
  for (std::size_t g = 0; g < store.size(); ++g)
    for (auto& t : store[g].tensors)
      saved.push_back(t.has_grad() ? std::vector<Real>(t.grad().begin(), t.grad().end()) : std::vector<Real>{});
  tape.backward(loss);
  std::size_t i = 0;
  for (std::size_t g = 0; g < store.size(); ++g)
    for (auto& t : store[g].tensors) {
      if (saved[i].empty()) {
        t.zero_grad();
      } else {
        std::copy(saved[i].begin(), saved[i].end(), t.grad().begin());
      }
      ++i;
    }
  Tensor<Real> grad(x.shape());
  std::copy(input.grad().begin(), input.grad().end(), grad.data().begin());
  return grad;
}

template <typename Real>
void project_linf(std::span<Real> candidate, std::span<const Real> x, double epsilon, double clamp_lo,
                  double clamp_hi) {
  const Real eps = static_cast<Real>(epsilon);
  const Real lo_clamp = static_cast<Real>(clamp_lo);
  const Real hi_clamp = static_cast<Real>(clamp_hi);
  // Distances are measured in double against the requested epsilon, not its
  // rounding to Real, which may be larger.
  auto dist = [](Real a, Real b) { return std::abs(static_cast<double>(a) - static_cast<double>(b)); };
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    Real hi = x[i] + eps;
    while (dist(hi, x[i]) > epsilon) hi = std::nextafter(hi, x[i]);
    Real lo = x[i] - eps;
    while (dist(x[i], lo) > epsilon) lo = std::nextafter(lo, x[i]);
    candidate[i] = std::clamp(std::clamp(candidate[i], lo, hi), lo_clamp, hi_clamp);
  }
}

namespace {

template <typename Real>
Real sign(Real v) {
  return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0));
}

template <typename Real>
void sign_step(Tensor<Real>& current, const Tensor<Real>& grad, double step) {
  const Real s = static_cast<Real>(step);
  for (std::size_t i = 0; i < current.numel(); ++i) current[i] += s * sign(grad[i]);
}

}  // namespace

template <typename Real>
Tensor<Real> fgsm(Model<Real>& model, const Tensor<Real>& x, std::span<const std::int32_t> labels,
                  const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.epsilon == 0) return x;
  const Tensor<Real> grad = input_gradient(model, x, labels);
  Tensor<Real> out = x;
  sign_step(out, grad, cfg.epsilon);
  project_linf<Real>(out.data(), x.data(), cfg.epsilon, cfg.clamp_lo, cfg.clamp_hi);
  return out;
}

template <typename Real>
Tensor<Real> pgd(Model<Real>& model, const Tensor<Real>& x, std::span<const std::int32_t> labels,
                 const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.epsilon == 0) return x;
  Tensor<Real> out = x;
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const Tensor<Real> grad = input_gradient(model, out, labels);
    sign_step(out, grad, cfg.effective_step());
    project_linf<Real>(out.data(), x.data(), cfg.epsilon, cfg.clamp_lo, cfg.clamp_hi);
  }
  return out;
}

template <typename Real>
Tensor<Real> attack(Model<Real>& model, const Tensor<Real>& x, std::span<const std::int32_t> labels,
                    const AttackConfig& cfg) {
  return cfg.iterations == 1 ? fgsm(model, x, labels, cfg) : pgd(model, x, labels, cfg);
}

template <typename Real>
std::vector<RobustnessRow> robustness_curve(Model<Real>& model, const Dataset& data, std::span<const double> epsilons,
                                            AttackKind kind, std::size_t pgd_iterations, std::size_t batch_size) {
  if (epsilons.empty() || epsilons.front() != 0.0 || !std::is_sorted(epsilons.begin(), epsilons.end())) {
    throw ConfigError("robustness.epsilons", "must be ascending and start at 0");
  }
  const double clean = evaluate(model, data, Task::Classify, nullptr, nullptr, batch_size);
  std::vector<RobustnessRow> rows;
  for (double eps : epsilons) {
    RobustnessRow row;
    row.epsilon = eps;
    row.clean_accuracy = clean;
    row.attack = kind == AttackKind::Fgsm ? "fgsm" : "pgd-" + std::to_string(pgd_iterations);
    row.model_mode = to_string(model.mode());
    if (eps == 0.0) {
      row.accuracy = clean;
    } else {
      AttackConfig cfg;
      cfg.epsilon = eps;
      cfg.iterations = kind == AttackKind::Fgsm ? 1 : pgd_iterations;
      row.accuracy = evaluate(model, data, Task::Classify, &cfg, nullptr, batch_size);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_robustness_csv(const std::vector<RobustnessRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epsilon,accuracy,clean_accuracy,attack,model_mode\n" << std::setprecision(10);
  for (const auto& r : rows)
    out << r.epsilon << ',' << r.accuracy << ',' << r.clean_accuracy << ',' << r.attack << ',' << r.model_mode << '\n';
}

std::vector<double> relative_improvement(const std::vector<RobustnessRow>& smoothed,
                                         const std::vector<RobustnessRow>& random) {
  if (smoothed.size() != random.size()) throw std::invalid_argument("robustness curves differ in length");
  std::vector<double> out;
  for (std::size_t i = 0; i < smoothed.size(); ++i) {
    if (smoothed[i].epsilon != random[i].epsilon) throw std::invalid_argument("robustness curves differ in epsilon");
    out.push_back((smoothed[i].accuracy - random[i].accuracy) / random[i].accuracy);
  }
  return out;
}

#define MIXBENCH_INSTANTIATE(Real)                                                                               \
  template Tensor<Real> input_gradient(Model<Real>&, const Tensor<Real>&, std::span<const std::int32_t>);        \
  template Tensor<Real> fgsm(Model<Real>&, const Tensor<Real>&, std::span<const std::int32_t>,                   \
                             const AttackConfig&);                                                              \
  template Tensor<Real> pgd(Model<Real>&, const Tensor<Real>&, std::span<const std::int32_t>,                    \
                            const AttackConfig&);                                                               \
  template Tensor<Real> attack(Model<Real>&, const Tensor<Real>&, std::span<const std::int32_t>,                 \
                               const AttackConfig&);                                                            \
  template void project_linf(std::span<Real>, std::span<const Real>, double, double, double);                   \
  template std::vector<RobustnessRow> robustness_curve(Model<Real>&, const Dataset&, std::span<const double>,     \
                                                       AttackKind, std::size_t, std::size_t);

MIXBENCH_INSTANTIATE(float)
MIXBENCH_INSTANTIATE(double)
#undef MIXBENCH_INSTANTIATE

}  // namespace mixbench
