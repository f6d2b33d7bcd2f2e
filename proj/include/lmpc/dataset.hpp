// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "lmpc/rng.hpp"
#include "lmpc/rssm.hpp"

namespace lmpc {

enum class PolicyTag : std::uint8_t { kRandom = 0, kExplore = 1, kEvaluate = 2 };

/// One episode as aligned triples (x_t, a_t, r_{t+1}), t = 0..length-1.
struct EpisodeRecord {
  std::uint64_t seed = 0;
  PolicyTag policy = PolicyTag::kRandom;
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> obs;
  std::vector<double> actions;
  std::vector<double> rewards;

  std::size_t length() const { return rewards.size(); }
  void append(std::span<const double> x, std::span<const double> a, double r_next);
  std::span<const double> obs_at(std::size_t t) const {
    return std::span(obs).subspan(t * obs_dim, obs_dim);
  }
  std::span<const double> action_at(std::size_t t) const {
    return std::span(actions).subspan(t * action_dim, action_dim);
  }
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct Dataset {
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  std::vector<EpisodeRecord> episodes;

  std::size_t transitions() const;
  void add(EpisodeRecord episode);
  bool empty() const { return episodes.empty(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// `batch` segments of `length` observations: an episode is chosen uniformly
/// among those long enough, then a start offset uniformly within it.
/// Throws Error when no episode has `length` steps.
SegmentBatch sample_segments(const Dataset& data, std::size_t batch, std::size_t length, Rng& rng);

// Append-only record file:
//   "LMPD" u32 version, u64 obs_dim, u64 action_dim
//   per episode: u64 length, u64 seed, u8 policy tag,
//                f64 obs[length*obs_dim], f64 actions[length*action_dim],
//                f64 rewards[length]
inline constexpr std::uint32_t kDatasetVersion = 1;

void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
/// Creates the file with a header if missing, then appends one episode.
void append_episode(const std::filesystem::path& path, const EpisodeRecord& episode);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace lmpc
