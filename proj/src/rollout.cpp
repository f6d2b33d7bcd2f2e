// SPDX-License-Identifier: Apache-2.0
#include "lmpc/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <vector>

#include "lmpc/error.hpp"

namespace lmpc {

namespace {

void check_job(const RolloutJob& job, std::span<double> member_returns) {
  if (job.ensemble == nullptr || job.belief == nullptr) throw Error("rollout: empty job");
  const auto& c = job.ensemble->config();
  const std::size_t E = job.ensemble->size();
  if (job.belief->size() != E) throw ShapeError("rollout: belief does not match the ensemble");
  if (job.horizon == 0) throw ShapeError("rollout: horizon must be >= 1");
  if (job.candidates.size() != job.K * job.horizon * c.action_dim) {
    throw ShapeError("rollout: candidate buffer has " + std::to_string(job.candidates.size()) +
                     " entries, expected " + std::to_string(job.K * job.horizon * c.action_dim));
  }
  if (member_returns.size() != job.K * E) throw ShapeError("rollout: output buffer size");
}

[[noreturn]] void bad_reward(std::size_t k, std::size_t i, std::size_t t) {
  throw NumericError("rollout: non-finite reward at candidate " + std::to_string(k) +
                     ", member " + std::to_string(i) + ", step " + std::to_string(t + 1));
}

}  // namespace

void rollout_serial(const RolloutJob& job, std::span<double> member_returns,
                    RolloutCounter* counter) {
  check_job(job, member_returns);
  const auto& ens = *job.ensemble;
  const auto& c = ens.config();
  const std::size_t E = ens.size(), A = c.action_dim, D = job.horizon * A;

  for (std::size_t k = 0; k < job.K; ++k) {
    for (std::size_t i = 0; i < E; ++i) {
      const auto& p = ens.members[i];
      Rng rng(derive_seed(job.seed, k, i));
      LatentState st = job.belief->states[i];
      double total = 0.0;
      for (std::size_t t = 0; t < job.horizon; ++t) {
        st.h = gru_step(p, st, job.candidates.subspan(k * D + t * A, A));
        const GaussianHead pr = prior(p, st.h);
        for (std::size_t j = 0; j < c.s_dim; ++j) st.s[j] = pr.mean[j] + pr.std[j] * rng.normal();
        const double r = decode(p, st.h, st.s).reward.mean[0];
        if (!std::isfinite(r)) bad_reward(k, i, t);
        total += r;
      }
      member_returns[k * E + i] = total;
    }
  }
  if (counter != nullptr) {
    counter->rollouts += job.K * E;
    ++counter->calls;
  }
}

void rollout_parallel(const RolloutJob& job, std::span<double> member_returns,
                      RolloutCounter* counter, std::size_t block) {
  check_job(job, member_returns);
  if (block == 0) block = 1;
  const auto& ens = *job.ensemble;
  const auto& c = ens.config();
  const std::size_t E = ens.size(), A = c.action_dim, H = c.h_dim, S = c.s_dim;
  const std::size_t T = job.horizon, D = T * A;
  const std::size_t blocks_per_member = (job.K + block - 1) / block;
  const std::size_t tasks = blocks_per_member * E;

  std::vector<std::exception_ptr> errors(tasks);
#pragma omp parallel
  {
    std::vector<double> h, h_next, s, mean, sd, a, r, noise, ret;
#pragma omp for schedule(static)
    for (std::size_t task = 0; task < tasks; ++task) {
      try {
        const std::size_t i = task / blocks_per_member;
        const std::size_t k0 = (task % blocks_per_member) * block;
        const std::size_t rows = std::min(block, job.K - k0);
        const auto& p = ens.members[i];
        const auto& start = job.belief->states[i];

        h.resize(rows * H);
        h_next.resize(rows * H);
        s.resize(rows * S);
        mean.resize(rows * S);
        sd.resize(rows * S);
        a.resize(rows * A);
        r.resize(rows);
        noise.resize(rows * T * S);
        ret.assign(rows, 0.0);
        for (std::size_t row = 0; row < rows; ++row) {
          std::copy(start.h.begin(), start.h.end(), h.begin() + row * H);
          std::copy(start.s.begin(), start.s.end(), s.begin() + row * S);
          Rng rng(derive_seed(job.seed, k0 + row, i));
          for (std::size_t j = 0; j < T * S; ++j) noise[row * T * S + j] = rng.normal();
        }

        for (std::size_t t = 0; t < T; ++t) {
          for (std::size_t row = 0; row < rows; ++row) {
            const double* src = job.candidates.data() + (k0 + row) * D + t * A;
            std::copy(src, src + A, a.begin() + row * A);
          }
          batched::gru(p, rows, h, s, a, h_next);
          std::swap(h, h_next);
          batched::prior(p, rows, h, mean, sd);
          for (std::size_t row = 0; row < rows; ++row) {
            const double* eps = noise.data() + row * T * S + t * S;
            for (std::size_t j = 0; j < S; ++j) {
              s[row * S + j] = mean[row * S + j] + sd[row * S + j] * eps[j];
            }
          }
          batched::reward(p, rows, h, s, r);
          for (std::size_t row = 0; row < rows; ++row) {
            if (!std::isfinite(r[row])) bad_reward(k0 + row, i, t);
            ret[row] += r[row];
          }
        }
        for (std::size_t row = 0; row < rows; ++row) member_returns[(k0 + row) * E + i] = ret[row];
        if (counter != nullptr) counter->rollouts += rows;
      } catch (...) {
        errors[task] = std::current_exception();
      }
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (counter != nullptr) ++counter->calls;
}

}  // namespace lmpc
