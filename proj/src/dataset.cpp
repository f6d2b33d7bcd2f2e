// SPDX-License-Identifier: Apache-2.0
#include "lmpc/dataset.hpp"

#include <fstream>

#include "lmpc/binary_io.hpp"
#include "lmpc/error.hpp"

namespace lmpc {

namespace {
constexpr char kMagic[5] = "LMPD";

void write_header(std::ostream& out, std::size_t obs_dim, std::size_t action_dim) {
  io::put_magic(out, kMagic);
  io::put_u32(out, kDatasetVersion);
  io::put_u64(out, obs_dim);
  io::put_u64(out, action_dim);
}

void write_episode(std::ostream& out, const EpisodeRecord& e) {
  io::put_u64(out, e.length());
  io::put_u64(out, e.seed);
  out.put(static_cast<char>(e.policy));
  for (double v : e.obs) io::put_f64(out, v);
  for (double v : e.actions) io::put_f64(out, v);
  for (double v : e.rewards) io::put_f64(out, v);
}
}  // namespace

void EpisodeRecord::append(std::span<const double> x, std::span<const double> a, double r_next) {
  if (x.size() != obs_dim || a.size() != action_dim) {
    throw ShapeError("episode record: transition does not match dimensions");
  }
  obs.insert(obs.end(), x.begin(), x.end());
  actions.insert(actions.end(), a.begin(), a.end());
  rewards.push_back(r_next);
}

std::size_t Dataset::transitions() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.length();
  return n;
}

void Dataset::add(EpisodeRecord episode) {
  if (episode.obs_dim != obs_dim || episode.action_dim != action_dim) {
    throw ShapeError("dataset: episode dimensions do not match");
  }
  episodes.push_back(std::move(episode));
}

SegmentBatch sample_segments(const Dataset& data, std::size_t batch, std::size_t length,
                             Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < data.episodes.size(); ++i) {
    if (data.episodes[i].length() >= length) eligible.push_back(i);
  }
  if (eligible.empty()) {
    throw Error("sample_segments: no episode has " + std::to_string(length) + " steps");
  }
  const std::size_t X = data.obs_dim, A = data.action_dim;
  SegmentBatch b;
  b.batch = batch;
  b.length = length;
  for (std::size_t t = 0; t < length; ++t) b.obs.emplace_back(ad::Shape{batch, X});
  for (std::size_t t = 0; t + 1 < length; ++t) {
    b.actions.emplace_back(ad::Shape{batch, A});
    b.rewards.emplace_back(ad::Shape{batch, 1});
  }
  for (std::size_t n = 0; n < batch; ++n) {
    const auto& ep = data.episodes[eligible[rng.index(eligible.size())]];
    const std::size_t start = rng.index(ep.length() - length + 1);
    for (std::size_t t = 0; t < length; ++t) {
      auto x = ep.obs_at(start + t);
      std::copy(x.begin(), x.end(), b.obs[t].ptr() + n * X);
      if (t + 1 < length) {
        auto a = ep.action_at(start + t);
        std::copy(a.begin(), a.end(), b.actions[t].ptr() + n * A);
        b.rewards[t][n] = ep.rewards[start + t];
      }
    }
  }
  return b;
}

void write_dataset(std::ostream& out, const Dataset& data) {
  write_header(out, data.obs_dim, data.action_dim);
  for (const auto& e : data.episodes) write_episode(out, e);
}

Dataset read_dataset(std::istream& in) {
  io::expect_magic(in, kMagic, "dataset");
  const auto version = io::get_u32(in);
  if (version != kDatasetVersion) {
    throw FormatError("dataset: unsupported version " + std::to_string(version));
  }
  Dataset d;
  d.obs_dim = io::get_u64(in);
  d.action_dim = io::get_u64(in);
  while (in.peek() != std::char_traits<char>::eof()) {
    EpisodeRecord e;
    e.obs_dim = d.obs_dim;
    e.action_dim = d.action_dim;
    const auto n = io::get_u64(in);
    e.seed = io::get_u64(in);
    const int tag = in.get();
    if (tag < 0 || tag > 2) throw FormatError("dataset: bad policy tag");
    e.policy = static_cast<PolicyTag>(tag);
    e.obs.resize(n * d.obs_dim);
    e.actions.resize(n * d.action_dim);
    e.rewards.resize(n);
    for (auto& v : e.obs) v = io::get_f64(in);
    for (auto& v : e.actions) v = io::get_f64(in);
    for (auto& v : e.rewards) v = io::get_f64(in);
    d.episodes.push_back(std::move(e));
  }
  return d;
}

void append_episode(const std::filesystem::path& path, const EpisodeRecord& episode) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot open dataset file " + path.string());
  if (fresh) write_header(out, episode.obs_dim, episode.action_dim);
  write_episode(out, episode);
  if (!out) throw Error("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset file " + path.string());
  return read_dataset(in);
}

}  // namespace lmpc
