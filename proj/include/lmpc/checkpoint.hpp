// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "lmpc/rssm.hpp"

namespace lmpc {

// Binary checkpoint layout, all integers and floats little-endian:
//
//   "LMPC"  u32 version
//   RssmConfig: u64 obs_dim, action_dim, h_dim, s_dim, hidden_dim;
//               f64 min_std, free_nats, reward_scale, obs_std
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u64 dims[rank],
//               f64 data[product of dims]
//
// An ensemble checkpoint uses the same container; tensor names carry a
// "member<i>/" prefix and members share one RssmConfig.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams read_checkpoint(std::istream& in);

void write_ensemble_checkpoint(std::ostream& out, std::span<const ModelParams> members);
std::vector<ModelParams> read_ensemble_checkpoint(std::istream& in);

void save_ensemble(const std::filesystem::path& path, std::span<const ModelParams> members);
std::vector<ModelParams> load_ensemble(const std::filesystem::path& path);

}  // namespace lmpc
