// SPDX-License-Identifier: Apache-2.0
#include "lmpc/rssm.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "lmpc/autodiff.hpp"
#include "lmpc/error.hpp"

namespace lmpc {

using ad::Shape;
using ad::Tensor;

void RssmConfig::validate() const {
  if (obs_dim < 1 || action_dim < 1 || h_dim < 1 || s_dim < 1 || hidden_dim < 1) {
    throw ConfigError("rssm: all dimensions must be >= 1");
  }
  if (!(min_std > 0.0)) throw ConfigError("rssm: min_std must be > 0");
  if (!(free_nats >= 0.0)) throw ConfigError("rssm: free_nats must be >= 0");
  if (!std::isfinite(reward_scale)) throw ConfigError("rssm: reward_scale must be finite");
  if (!(obs_std > 0.0) || !std::isfinite(obs_std)) throw ConfigError("rssm: obs_std must be > 0");
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const RssmConfig& c) {
  const std::size_t in = c.s_dim + c.action_dim, H = c.h_dim, S = c.s_dim, F = c.hidden_dim;
  return {
      {"gru.w_z", {in, H}},      {"gru.u_z", {H, H}},       {"gru.b_z", {H}},
      {"gru.w_r", {in, H}},      {"gru.u_r", {H, H}},       {"gru.b_r", {H}},
      {"gru.w_n", {in, H}},      {"gru.u_n", {H, H}},       {"gru.b_n", {H}},
      {"prior.w1", {H, F}},      {"prior.b1", {F}},         {"prior.w_mean", {F, S}},
      {"prior.b_mean", {S}},     {"prior.w_std", {F, S}},   {"prior.b_std", {S}},
      {"enc.w1", {c.obs_dim, F}}, {"enc.b1", {F}},          {"enc.w2", {F, F}},
      {"enc.b2", {F}},           {"post.w1", {H + F, F}},   {"post.b1", {F}},
      {"post.w_mean", {F, S}},   {"post.b_mean", {S}},      {"post.w_std", {F, S}},
      {"post.b_std", {S}},       {"obs.w1", {H + S, F}},    {"obs.b1", {F}},
      {"obs.w2", {F, c.obs_dim}}, {"obs.b2", {c.obs_dim}},  {"reward.w1", {H + S, F}},
      {"reward.b1", {F}},        {"reward.w2", {F, 1}},     {"reward.b2", {1}},
  };
}

void ModelParams::check() const {
  auto layout = parameter_layout(config);
  if (weights.size() != layout.size()) {
    throw ShapeError("model params: expected " + std::to_string(layout.size()) +
                     " tensors, got " + std::to_string(weights.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (weights.name(i) != layout[i].first || weights[i].shape() != layout[i].second) {
      throw ShapeError("model params: entry " + std::to_string(i) + " is " + weights.name(i) +
                       " " + ad::shape_str(weights[i].shape()) + ", expected " +
                       layout[i].first + " " + ad::shape_str(layout[i].second));
    }
  }
}

ModelParams zero_params(const RssmConfig& config) {
  config.validate();
  ModelParams p{config, {}};
  for (auto& [name, shape] : parameter_layout(config)) p.weights.add(name, Tensor(shape));
  return p;
}

ModelParams init_params(const RssmConfig& config, std::uint64_t seed) {
  ModelParams p = zero_params(config);
  Rng rng(seed);
  for (auto& w : p.weights.values()) {
    if (w.rank() != 2) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(w.dim(0) + w.dim(1)));
    for (auto& x : w.data()) x = rng.uniform(-limit, limit);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Batched forward kernels. Accumulation order matches the taped ops exactly:
// products summed from zero in input order, then the bias added.

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(std::string("rssm: buffer size mismatch in ") + what);
}

// y = x W, x is [rows, in], W is [in, out].
void matmul_rows(std::size_t rows, const double* x, const Tensor& w, double* y) {
  const std::size_t in = w.dim(0), out = w.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y + r * out;
    for (std::size_t j = 0; j < out; ++j) yr[j] = 0.0;
    const double* xr = x + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      const double* wi = w.ptr() + i * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xi * wi[j];
    }
  }
}

enum class Act { kNone, kTanh };

void dense(std::size_t rows, const double* x, const Tensor& w, const Tensor& b, double* y,
           Act act) {
  matmul_rows(rows, x, w, y);
  const std::size_t out = w.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y + r * out;
    for (std::size_t j = 0; j < out; ++j) {
      const double v = yr[j] + b[j];
      yr[j] = act == Act::kTanh ? std::tanh(v) : v;
    }
  }
}

std::vector<double> concat_rows(std::size_t rows, const double* a, std::size_t na,
                                const double* b, std::size_t nb) {
  std::vector<double> out(rows * (na + nb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(a + r * na, a + (r + 1) * na, out.begin() + r * (na + nb));
    std::copy(b + r * nb, b + (r + 1) * nb, out.begin() + r * (na + nb) + na);
  }
  return out;
}

void gaussian_head(const ModelParams& p, std::size_t rows, const double* hidden, Param wm,
                   Param bm, Param ws, Param bs, double* mean, double* std) {
  dense(rows, hidden, p[wm], p[bm], mean, Act::kNone);
  dense(rows, hidden, p[ws], p[bs], std, Act::kNone);
  const std::size_t n = rows * p.config.s_dim;
  for (std::size_t i = 0; i < n; ++i) std[i] = ad::softplus(std[i]) + p.config.min_std;
}

}  // namespace

namespace batched {

void gru(const ModelParams& p, std::size_t rows, std::span<const double> h,
         std::span<const double> s, std::span<const double> a, std::span<double> h_out) {
  const auto& c = p.config;
  const std::size_t H = c.h_dim;
  require(h.size() == rows * H && s.size() == rows * c.s_dim &&
              a.size() == rows * c.action_dim && h_out.size() == rows * H,
          "gru");
  auto x = concat_rows(rows, s.data(), c.s_dim, a.data(), c.action_dim);
  std::vector<double> xz(rows * H), hz(rows * H), xr(rows * H), hr(rows * H), xn(rows * H),
      rh(rows * H), rhn(rows * H), z(rows * H);
  matmul_rows(rows, x.data(), p[kGruWz], xz.data());
  matmul_rows(rows, h.data(), p[kGruUz], hz.data());
  matmul_rows(rows, x.data(), p[kGruWr], xr.data());
  matmul_rows(rows, h.data(), p[kGruUr], hr.data());
  matmul_rows(rows, x.data(), p[kGruWn], xn.data());
  const Tensor& bz = p[kGruBz];
  const Tensor& br = p[kGruBr];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < H; ++j) {
      const std::size_t i = r * H + j;
      z[i] = ad::sigmoid((xz[i] + hz[i]) + bz[j]);
      rh[i] = ad::sigmoid((xr[i] + hr[i]) + br[j]) * h[i];
    }
  }
  matmul_rows(rows, rh.data(), p[kGruUn], rhn.data());
  const Tensor& bn = p[kGruBn];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < H; ++j) {
      const std::size_t i = r * H + j;
      const double n = std::tanh((xn[i] + rhn[i]) + bn[j]);
      h_out[i] = z[i] * h[i] + (-z[i] + 1.0) * n;
    }
  }
}

void prior(const ModelParams& p, std::size_t rows, std::span<const double> h,
           std::span<double> mean, std::span<double> std) {
  const auto& c = p.config;
  require(h.size() == rows * c.h_dim && mean.size() == rows * c.s_dim &&
              std.size() == rows * c.s_dim,
          "prior");
  std::vector<double> hid(rows * c.hidden_dim);
  dense(rows, h.data(), p[kPriorW1], p[kPriorB1], hid.data(), Act::kTanh);
  gaussian_head(p, rows, hid.data(), kPriorWm, kPriorBm, kPriorWs, kPriorBs, mean.data(),
                std.data());
}

void posterior(const ModelParams& p, std::size_t rows, std::span<const double> h,
               std::span<const double> x, std::span<double> mean, std::span<double> std) {
  const auto& c = p.config;
  require(h.size() == rows * c.h_dim && x.size() == rows * c.obs_dim &&
              mean.size() == rows * c.s_dim && std.size() == rows * c.s_dim,
          "posterior");
  const std::size_t F = c.hidden_dim;
  std::vector<double> e1(rows * F), e2(rows * F), hid(rows * F);
  dense(rows, x.data(), p[kEncW1], p[kEncB1], e1.data(), Act::kTanh);
  dense(rows, e1.data(), p[kEncW2], p[kEncB2], e2.data(), Act::kTanh);
  auto in = concat_rows(rows, h.data(), c.h_dim, e2.data(), F);
  dense(rows, in.data(), p[kPostW1], p[kPostB1], hid.data(), Act::kTanh);
  gaussian_head(p, rows, hid.data(), kPostWm, kPostBm, kPostWs, kPostBs, mean.data(), std.data());
}

void reward(const ModelParams& p, std::size_t rows, std::span<const double> h,
            std::span<const double> s, std::span<double> r) {
  const auto& c = p.config;
  require(h.size() == rows * c.h_dim && s.size() == rows * c.s_dim && r.size() == rows,
          "reward");
  auto in = concat_rows(rows, h.data(), c.h_dim, s.data(), c.s_dim);
  std::vector<double> hid(rows * c.hidden_dim);
  dense(rows, in.data(), p[kRewW1], p[kRewB1], hid.data(), Act::kTanh);
  dense(rows, hid.data(), p[kRewW2], p[kRewB2], r.data(), Act::kNone);
}

void observation(const ModelParams& p, std::size_t rows, std::span<const double> h,
                 std::span<const double> s, std::span<double> x) {
  const auto& c = p.config;
  require(h.size() == rows * c.h_dim && s.size() == rows * c.s_dim &&
              x.size() == rows * c.obs_dim,
          "observation");
  auto in = concat_rows(rows, h.data(), c.h_dim, s.data(), c.s_dim);
  std::vector<double> hid(rows * c.hidden_dim);
  dense(rows, in.data(), p[kObsW1], p[kObsB1], hid.data(), Act::kTanh);
  dense(rows, hid.data(), p[kObsW2], p[kObsB2], x.data(), Act::kNone);
}

}  // namespace batched

// ---------------------------------------------------------------------------
// Single-vector operations.

std::vector<double> gru_step(const ModelParams& p, const LatentState& prev,
                             std::span<const double> action) {
  std::vector<double> out(p.config.h_dim);
  batched::gru(p, 1, prev.h, prev.s, action, out);
  return out;
}

GaussianHead prior(const ModelParams& p, std::span<const double> h) {
  GaussianHead g{std::vector<double>(p.config.s_dim), std::vector<double>(p.config.s_dim)};
  batched::prior(p, 1, h, g.mean, g.std);
  return g;
}

GaussianHead posterior(const ModelParams& p, std::span<const double> h,
                       std::span<const double> x) {
  GaussianHead g{std::vector<double>(p.config.s_dim), std::vector<double>(p.config.s_dim)};
  batched::posterior(p, 1, h, x, g.mean, g.std);
  return g;
}

Decoded decode(const ModelParams& p, std::span<const double> h, std::span<const double> s) {
  Decoded d;
  d.obs.mean.resize(p.config.obs_dim);
  d.obs.std.assign(p.config.obs_dim, p.config.obs_std);
  d.reward.mean.resize(1);
  d.reward.std.assign(1, 1.0);
  batched::observation(p, 1, h, s, d.obs.mean);
  batched::reward(p, 1, h, s, d.reward.mean);
  return d;
}

std::vector<double> sample(const GaussianHead& head, Rng& rng) {
  std::vector<double> out(head.mean.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = head.mean[i] + head.std[i] * rng.normal();
  return out;
}

double kl_diag_gaussian(const GaussianHead& q, const GaussianHead& p) {
  if (q.mean.size() != p.mean.size() || q.std.size() != q.mean.size() ||
      p.std.size() != p.mean.size()) {
    throw ShapeError("kl_diag_gaussian: dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    const double d = q.mean[i] - p.mean[i];
    kl += std::log(p.std[i]) - std::log(q.std[i]) +
          (q.std[i] * q.std[i] + d * d) / (2.0 * p.std[i] * p.std[i]) - 0.5;
  }
  return kl;
}

// ---------------------------------------------------------------------------
// Taped model for training.

void SegmentBatch::check(const RssmConfig& c) const {
  auto bad = [](const std::string& what) { throw ShapeError("segment batch: " + what); };
  if (length < 2) bad("length must be >= 2");
  if (obs.size() != length || actions.size() != length - 1 || rewards.size() != length - 1) {
    bad("sequence lengths do not match length " + std::to_string(length));
  }
  for (const auto& x : obs) {
    if (x.shape() != Shape{batch, c.obs_dim}) bad("observation shape " + ad::shape_str(x.shape()));
  }
  for (const auto& a : actions) {
    if (a.shape() != Shape{batch, c.action_dim}) bad("action shape " + ad::shape_str(a.shape()));
  }
  for (const auto& r : rewards) {
    if (r.shape() != Shape{batch, 1}) bad("reward shape " + ad::shape_str(r.shape()));
  }
}

namespace {

using ad::Var;

struct TapedModel {
  const RssmConfig& c;
  std::vector<Var> w;

  Var dense(Var x, Param wi, Param bi, bool tanh_act) const {
    Var y = ad::add(ad::matmul(x, w[wi]), w[bi]);
    return tanh_act ? ad::tanh(y) : y;
  }

  Var gru(Var h, Var s, Var a) const {
    Var x = ad::concat(s, a);
    Var z = ad::sigmoid(ad::add(ad::add(ad::matmul(x, w[kGruWz]), ad::matmul(h, w[kGruUz])),
                                w[kGruBz]));
    Var r = ad::sigmoid(ad::add(ad::add(ad::matmul(x, w[kGruWr]), ad::matmul(h, w[kGruUr])),
                                w[kGruBr]));
    Var n = ad::tanh(ad::add(
        ad::add(ad::matmul(x, w[kGruWn]), ad::matmul(ad::mul(r, h), w[kGruUn])), w[kGruBn]));
    return ad::add(ad::mul(z, h), ad::mul(ad::add_scalar(ad::neg(z), 1.0), n));
  }

  std::pair<Var, Var> head(Var hidden, Param wm, Param bm, Param ws, Param bs) const {
    Var mean = dense(hidden, wm, bm, false);
    Var std = ad::add_scalar(ad::softplus(dense(hidden, ws, bs, false)), c.min_std);
    return {mean, std};
  }

  std::pair<Var, Var> prior(Var h) const {
    return head(dense(h, kPriorW1, kPriorB1, true), kPriorWm, kPriorBm, kPriorWs, kPriorBs);
  }

  std::pair<Var, Var> posterior(Var h, Var x) const {
    Var e = dense(dense(x, kEncW1, kEncB1, true), kEncW2, kEncB2, true);
    Var hid = dense(ad::concat(h, e), kPostW1, kPostB1, true);
    return head(hid, kPostWm, kPostBm, kPostWs, kPostBs);
  }

  Var observation(Var h, Var s) const {
    return dense(dense(ad::concat(h, s), kObsW1, kObsB1, true), kObsW2, kObsB2, false);
  }

  Var reward(Var h, Var s) const {
    return dense(dense(ad::concat(h, s), kRewW1, kRewB1, true), kRewW2, kRewB2, false);
  }
};

// Per-row sum of KL(q || p) for diagonal Gaussians -> [batch].
Var kl_rows(Var qm, Var qs, Var pm, Var ps) {
  Var ratio = ad::sub(ad::log(ps), ad::log(qs));
  Var num = ad::add(ad::square(qs), ad::square(ad::sub(qm, pm)));
  Var quad = ad::div(num, ad::scale(ad::square(ps), 2.0));
  return ad::sum_last(ad::add_scalar(ad::add(ratio, quad), -0.5));
}

// Per-row Gaussian negative log-likelihood with fixed std -> [batch].
Var nll_rows(Var target, Var mean, double std) {
  const double dims = static_cast<double>(mean.value().cols());
  return ad::add_scalar(
      ad::scale(ad::sum_last(ad::square(ad::sub(target, mean))), 0.5 / (std * std)),
      dims * (std::log(std) + 0.5 * std::log(2.0 * std::numbers::pi)));
}

Tensor noise(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(Shape{rows, cols});
  for (auto& x : t.data()) x = rng.normal();
  return t;
}

double batch_mean(const Tensor& t) {
  double s = 0.0;
  for (double x : t.data()) s += x;
  return s / static_cast<double>(t.size());
}

}  // namespace

ElboResult elbo(const ModelParams& params, const SegmentBatch& batch, Rng& rng,
                bool with_gradient) {
  const RssmConfig& c = params.config;
  params.check();
  batch.check(c);
  const std::size_t B = batch.batch;

  ad::Tape tape;
  TapedModel m{c, tape.watch(params.weights)};
  ElboResult res;
  Var total;
  try {
    Var h = tape.constant(Tensor(Shape{B, c.h_dim}));
    Var s;
    for (std::size_t t = 0; t < batch.length; ++t) {
      if (t > 0) h = m.gru(h, s, tape.constant(batch.actions[t - 1]));
      Var x = tape.constant(batch.obs[t]);
      auto [qm, qs] = m.posterior(h, x);
      auto [pm, ps] = m.prior(h);
      s = ad::add(qm, ad::mul(qs, tape.constant(noise(B, c.s_dim, rng))));

      Var recon = nll_rows(x, m.observation(h, s), c.obs_std);
      if (t > 0) {
        Var r_nll = nll_rows(tape.constant(batch.rewards[t - 1]), m.reward(h, s), 1.0);
        recon = ad::add(recon, ad::scale(r_nll, c.reward_scale));
      }
      Var kl = kl_rows(qm, qs, pm, ps);
      res.reconstruction += batch_mean(recon.value());
      res.complexity += batch_mean(kl.value());
      Var step = ad::add(recon, ad::maximum(kl, c.free_nats));
      total = t == 0 ? step : ad::add(total, step);
    }
  } catch (const NumericError& e) {
    std::ostringstream os;
    os << "elbo: " << e.what() << " (reconstruction so far " << res.reconstruction
       << ", complexity so far " << res.complexity << ")";
    throw NumericError(os.str());
  }
  Var loss = ad::mean(total);
  res.loss = loss.value().item();
  if (!std::isfinite(res.loss)) {
    std::ostringstream os;
    os << "elbo: non-finite loss (reconstruction " << res.reconstruction << ", complexity "
       << res.complexity << ")";
    throw NumericError(os.str());
  }
  if (with_gradient) {
    auto grads = tape.gradient(loss, m.w);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      res.gradients.add(params.weights.name(i), std::move(grads[i]));
    }
  }
  return res;
}

double one_step_prediction_error(const ModelParams& params, const SegmentBatch& batch,
                                 Rng& rng) {
  const RssmConfig& c = params.config;
  batch.check(c);
  const std::size_t B = batch.batch, H = c.h_dim, S = c.s_dim, X = c.obs_dim;
  std::vector<double> h(B * H, 0.0), s(B * S), mean(B * S), std(B * S), h_next(B * H),
      s_pred(B * S), x_pred(B * X);
  double err = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t + 1 < batch.length; ++t) {
    if (t > 0) {
      batched::gru(params, B, h, s, batch.actions[t - 1].data(), h_next);
      h.swap(h_next);
    }
    batched::posterior(params, B, h, batch.obs[t].data(), mean, std);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = mean[i] + std[i] * rng.normal();
    // Open-loop guess of x_{t+1} from the prior mean.
    batched::gru(params, B, h, s, batch.actions[t].data(), h_next);
    batched::prior(params, B, h_next, s_pred, std);
    batched::observation(params, B, h_next, s_pred, x_pred);
    const Tensor& target = batch.obs[t + 1];
    for (std::size_t i = 0; i < x_pred.size(); ++i) {
      const double d = x_pred[i] - target[i];
      err += d * d;
    }
    count += x_pred.size();
  }
  return err / static_cast<double>(count);
}

}  // namespace lmpc
