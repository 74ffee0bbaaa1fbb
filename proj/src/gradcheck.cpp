#include "ccldc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ccldc/errors.hpp"
#include "ccldc/losses.hpp"
#include "ccldc/nn.hpp"

namespace ccldc {

bool GradCheckReport::all_passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const GradCaseResult& r) { return r.passed; });
}

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(std::move(shape), std::move(v), grad);
}

// Values bounded away from zero so relu's kink is never within h.
Tensor off_zero_tensor(Rng& rng, Shape shape) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
  return Tensor::from_values(std::move(shape), std::move(v), true);
}

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.index(classes));
  return y;
}

// Weighted sum with fixed random weights so every output entry matters.
Tensor project(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

GradInstance projected(Rng& rng, std::vector<Tensor> inputs, Shape out_shape,
                       std::function<Tensor(const std::vector<Tensor>&)> op) {
  const Tensor w = random_tensor(rng, std::move(out_shape), -1.0, 1.0, false);
  return {std::move(inputs), {}, [op = std::move(op), w](const std::vector<Tensor>& in) {
            return project(op(in), w);
          }};
}

std::vector<Tensor> chain_logits(Rng& rng, std::size_t stages, std::size_t batch, std::size_t k,
                                 double spread = 2.0) {
  std::vector<Tensor> out;
  for (std::size_t s = 0; s < stages; ++s) out.push_back(random_tensor(rng, {batch, k}, -spread, spread));
  return out;
}

std::vector<Tensor> slice(const std::vector<Tensor>& in, std::size_t begin, std::size_t count) {
  return {in.begin() + static_cast<std::ptrdiff_t>(begin),
          in.begin() + static_cast<std::ptrdiff_t>(begin + count)};
}

std::vector<std::size_t> range(std::size_t begin, std::size_t count) {
  std::vector<std::size_t> r(count);
  for (std::size_t i = 0; i < count; ++i) r[i] = begin + i;
  return r;
}

LossWeights random_weights(Rng& rng) {
  LossWeights w;
  w.lambda1 = rng.uniform(0.1, 1.5);
  w.lambda2 = rng.uniform(0.1, 3.0);
  w.tau = rng.uniform(0.5, 3.0);
  return w;
}

GradCase dc_case(SchemeVariant variant) {
  return {"dc_loss[" + std::string(to_string(variant)) + "]", [variant](Rng& rng) {
            constexpr std::size_t n = 4, b = 3, k = 5;
            auto inputs = chain_logits(rng, n, b, k);
            const auto teacher = chain_logits(rng, n, b, k);
            inputs.insert(inputs.end(), teacher.begin(), teacher.end());
            const auto y = random_labels(rng, b, k);
            const LossWeights w = random_weights(rng);
            return GradInstance{inputs, range(n, n), [=](const std::vector<Tensor>& in) {
                                  return dc_loss(slice(in, 0, n), slice(in, n, n), y, w, variant);
                                }};
          }};
}

}  // namespace

std::vector<GradCase> builtin_grad_cases() {
  std::vector<GradCase> cases;
  auto add_case = [&](std::string name, std::function<GradInstance(Rng&)> make) {
    cases.push_back({std::move(name), std::move(make)});
  };

  // ---- tensor ops -----------------------------------------------------------
  add_case("matmul", [](Rng& rng) {
    return projected(rng, {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})}, {3, 2},
                     [](const auto& in) { return matmul(in[0], in[1]); });
  });
  add_case("add", [](Rng& rng) {
    return projected(rng, {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})}, {3, 4},
                     [](const auto& in) { return add(in[0], in[1]); });
  });
  add_case("sub", [](Rng& rng) {
    return projected(rng, {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})}, {3, 4},
                     [](const auto& in) { return sub(in[0], in[1]); });
  });
  add_case("mul", [](Rng& rng) {
    return projected(rng, {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})}, {3, 4},
                     [](const auto& in) { return mul(in[0], in[1]); });
  });
  add_case("scale", [](Rng& rng) {
    const double s = rng.uniform(-2.0, 2.0);
    return projected(rng, {random_tensor(rng, {2, 5})}, {2, 5},
                     [s](const auto& in) { return scale(in[0], s); });
  });
  add_case("div_scalar", [](Rng& rng) {
    const double d = rng.uniform(0.5, 3.0);
    return projected(rng, {random_tensor(rng, {2, 5})}, {2, 5},
                     [d](const auto& in) { return div_scalar(in[0], d); });
  });
  add_case("add_row", [](Rng& rng) {
    return projected(rng, {random_tensor(rng, {4, 3}), random_tensor(rng, {3})}, {4, 3},
                     [](const auto& in) { return add_row(in[0], in[1]); });
  });
  add_case("relu", [](Rng& rng) {
    return projected(rng, {off_zero_tensor(rng, {4, 5})}, {4, 5},
                     [](const auto& in) { return relu(in[0]); });
  });
  add_case("sum", [](Rng& rng) {
    return projected(rng, {random_tensor(rng, {3, 7})}, {1},
                     [](const auto& in) { return sum(in[0]); });
  });
  add_case("mean", [](Rng& rng) {
    return projected(rng, {random_tensor(rng, {3, 7})}, {1},
                     [](const auto& in) { return mean(in[0]); });
  });
  add_case("reshape", [](Rng& rng) {
    return projected(rng, {random_tensor(rng, {2, 6})}, {3, 4},
                     [](const auto& in) { return reshape(in[0], {3, 4}); });
  });
  add_case("flatten", [](Rng& rng) {
    return projected(rng, {random_tensor(rng, {2, 2, 3})}, {2, 6},
                     [](const auto& in) { return flatten(in[0]); });
  });
  add_case("softmax", [](Rng& rng) {
    const double tau = rng.uniform(0.5, 3.0);
    return projected(rng, {random_tensor(rng, {3, 5}, -3.0, 3.0)}, {3, 5},
                     [tau](const auto& in) { return softmax(in[0], tau); });
  });
  add_case("log_softmax", [](Rng& rng) {
    const double tau = rng.uniform(0.5, 3.0);
    return projected(rng, {random_tensor(rng, {3, 5}, -3.0, 3.0)}, {3, 5},
                     [tau](const auto& in) { return log_softmax(in[0], tau); });
  });
  add_case("gather_rows", [](Rng& rng) {
    const auto idx = random_labels(rng, 4, 5);
    return projected(rng, {random_tensor(rng, {4, 5})}, {4},
                     [idx](const auto& in) { return gather_rows(in[0], idx); });
  });
  add_case("concat_rows", [](Rng& rng) {
    return projected(rng, {random_tensor(rng, {2, 3}), random_tensor(rng, {4, 3})}, {6, 3},
                     [](const auto& in) { return concat_rows(in); });
  });
  add_case("slice_rows", [](Rng& rng) {
    return projected(rng, {random_tensor(rng, {5, 3})}, {2, 3},
                     [](const auto& in) { return slice_rows(in[0], 1, 3); });
  });

  // ---- loss compositions ----------------------------------------------------
  add_case("cross_entropy", [](Rng& rng) {
    const auto y = random_labels(rng, 4, 5);
    return GradInstance{{random_tensor(rng, {4, 5}, -3.0, 3.0)}, {},
                        [y](const auto& in) { return cross_entropy(in[0], y); }};
  });
  for (KlDirection dir : {KlDirection::teacher_student, KlDirection::student_teacher}) {
    add_case("soft_kl[" + std::string(to_string(dir)) + "]", [dir](Rng& rng) {
      const double tau = rng.uniform(0.5, 3.0);
      return GradInstance{{random_tensor(rng, {4, 5}, -3.0, 3.0), random_tensor(rng, {4, 5}, -3.0, 3.0)},
                          {1},
                          [tau, dir](const auto& in) { return soft_kl(in[0], in[1], tau, dir); }};
    });
  }
  add_case("ccl_loss", [](Rng& rng) {
    const auto y = random_labels(rng, 4, 5);
    const LossWeights w = random_weights(rng);
    return GradInstance{{random_tensor(rng, {4, 5}, -3.0, 3.0), random_tensor(rng, {4, 5}, -3.0, 3.0)},
                        {1},
                        [y, w](const auto& in) { return ccl_loss(in[0], in[1], y, w); }};
  });
  for (SchemeVariant v : {SchemeVariant::hard_to_easy, SchemeVariant::easy_to_hard,
                          SchemeVariant::same_difficulty}) {
    cases.push_back(dc_case(v));
  }
  add_case("sdc_loss", [](Rng& rng) {
    constexpr std::size_t n = 4, b = 3, k = 5;
    const auto chain = chain_logits(rng, n, b, k);
    const auto y = random_labels(rng, b, k);
    const LossWeights w = random_weights(rng);
    std::vector<Tensor> frozen;
    for (const Tensor& t : chain) frozen.push_back(t.detach());
    return GradInstance{chain,
                        {},
                        [=](const std::vector<Tensor>& in) {
                          return sdc_loss(in, y, w, SchemeVariant::hard_to_easy);
                        },
                        [=](const std::vector<Tensor>& in) {
                          return dc_loss(in, frozen, y, w, SchemeVariant::hard_to_easy);
                        }};
  });
  add_case("untrained_distill_loss", [](Rng& rng) {
    const auto y = random_labels(rng, 4, 5);
    const LossWeights w = random_weights(rng);
    return GradInstance{{random_tensor(rng, {4, 5}, -3.0, 3.0), random_tensor(rng, {4, 5}, -3.0, 3.0)},
                        {1},
                        [y, w](const auto& in) { return untrained_distill_loss(in[0], in[1], y, w); }};
  });
  add_case("multiview_loss", [](Rng& rng) {
    constexpr std::size_t n = 4, b = 3, k = 5;
    const auto chain = chain_logits(rng, n, b, k);
    const auto y = random_labels(rng, b, k);
    const double l1 = rng.uniform(0.1, 1.5);
    return GradInstance{chain, {}, [=](const std::vector<Tensor>& in) {
                          return multiview_loss(in, y, l1);
                        }};
  });
  add_case("ccl_dc_loss", [](Rng& rng) {
    constexpr std::size_t n = 4, b = 3, k = 5;
    // inputs: baseline logits, student chain, teacher chain
    std::vector<Tensor> inputs{random_tensor(rng, {b, k}, -2.0, 2.0)};
    const auto student = chain_logits(rng, n, b, k);
    const auto teacher = chain_logits(rng, n, b, k);
    inputs.insert(inputs.end(), student.begin(), student.end());
    inputs.insert(inputs.end(), teacher.begin(), teacher.end());
    const auto y = random_labels(rng, b, k);
    const LossWeights w = random_weights(rng);
    return GradInstance{inputs, range(1 + n, n), [=](const std::vector<Tensor>& in) {
                          const Tensor base = cross_entropy(in[0], y);
                          return ccl_dc_loss(base, slice(in, 1, n), slice(in, 1 + n, n), y, w,
                                             SchemeVariant::hard_to_easy)
                              .total;
                        }};
  });
  add_case("mlp_cross_entropy", [](Rng& rng) {
    Architecture arch;
    arch.input_dim = 6;
    arch.hidden = {5, 4};
    arch.num_classes = 3;
    const Network net = Network::init(arch, rng.next_u64());
    const Tensor x = random_tensor(rng, {4, 6}, -1.0, 1.0, false);
    const auto y = random_labels(rng, 4, 3);
    auto params = net.parameters();
    // Biases start at zero; move them off the initializer so the check is generic.
    for (Tensor& p : params) {
      for (double& v : p.mutable_values()) v += rng.uniform(-0.1, 0.1);
    }
    return GradInstance{params, {}, [net, x, y](const std::vector<Tensor>&) {
                          return cross_entropy(net.forward(x), y);
                        }};
  });
  return cases;
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) h = (h ^ ch) * 0x100000001b3ull;
  return h;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

GradCaseResult check_case(const GradCase& c, const GradCheckOptions& opt) {
  GradCaseResult result;
  result.name = c.name;
  Rng rng(opt.seed, fnv1a(c.name));
  for (std::size_t n = 0; n < opt.instances; ++n) {
    GradInstance inst = c.make(rng);
    for (Tensor& t : inst.inputs) t.zero_grad();
    const Tensor loss = inst.loss(inst.inputs);
    const double value = loss.item();
    loss.backward();
    ++result.instances;
    const auto& differenced = inst.fd_loss ? inst.fd_loss : inst.loss;
    if (inst.fd_loss) {
      NoGradGuard no_grad;
      const double ref = inst.fd_loss(inst.inputs).item();
      if (std::abs(ref - value) > 1e-12 * std::max(1.0, std::abs(value)) && result.passed) {
        result.passed = false;
        result.message = "finite-difference reference disagrees with the loss value";
      }
    }

    for (std::size_t i = 0; i < inst.inputs.size(); ++i) {
      Tensor& input = inst.inputs[i];
      const std::vector<double> analytic = input.grad_or_zero();
      const bool is_teacher =
          std::find(inst.teacher.begin(), inst.teacher.end(), i) != inst.teacher.end();
      if (is_teacher) {
        for (double g : analytic) {
          result.max_teacher_grad = std::max(result.max_teacher_grad, std::abs(g));
        }
        if (result.max_teacher_grad != 0.0 && result.passed) {
          result.passed = false;
          result.message = "teacher input " + std::to_string(i) + " received a gradient";
        }
        continue;
      }
      std::vector<double> fd(analytic.size());
      {
        NoGradGuard no_grad;
        auto values = input.mutable_values();
        for (std::size_t e = 0; e < values.size(); ++e) {
          const double saved = values[e];
          values[e] = saved + opt.step;
          const double up = differenced(inst.inputs).item();
          values[e] = saved - opt.step;
          const double down = differenced(inst.inputs).item();
          values[e] = saved;
          fd[e] = (up - down) / (2.0 * opt.step);
        }
      }
      std::vector<double> diff(fd.size());
      for (std::size_t e = 0; e < fd.size(); ++e) diff[e] = analytic[e] - fd[e];
      const double scale_norm = std::max(norm(analytic), norm(fd));
      const double err = scale_norm < 1e-8 ? norm(diff) : norm(diff) / scale_norm;
      result.max_error = std::max(result.max_error, err);
      if (!(err <= opt.tolerance) && result.passed) {
        result.passed = false;
        char buf[160];
        std::snprintf(buf, sizeof buf, "instance %zu input %zu: relative error %.3e > %.1e", n, i,
                      err, opt.tolerance);
        result.message = buf;
      }
    }
  }
  return result;
}

GradCheckReport run_gradcheck(const std::vector<GradCase>& cases, const GradCheckOptions& opt) {
  GradCheckReport report;
  for (const GradCase& c : cases) report.cases.push_back(check_case(c, opt));
  return report;
}

}  // namespace ccldc
