// SPDX-License-Identifier: Apache-2.0
#include "lmpc/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <string>

#include "lmpc/binary_io.hpp"
#include "lmpc/error.hpp"

namespace lmpc {

namespace {

constexpr char kMagic[5] = "LMPC";
constexpr std::uint32_t kMaxName = 4096;
constexpr std::uint32_t kMaxRank = 8;

void write_header(std::ostream& out, const RssmConfig& c, std::uint32_t count) {
  io::put_magic(out, kMagic);
  io::put_u32(out, kCheckpointVersion);
  io::put_u64(out, c.obs_dim);
  io::put_u64(out, c.action_dim);
  io::put_u64(out, c.h_dim);
  io::put_u64(out, c.s_dim);
  io::put_u64(out, c.hidden_dim);
  io::put_f64(out, c.min_std);
  io::put_f64(out, c.free_nats);
  io::put_f64(out, c.reward_scale);
  io::put_f64(out, c.obs_std);
  io::put_u32(out, count);
}

void write_tensor(std::ostream& out, const std::string& name, const ad::Tensor& t) {
  io::put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  io::put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) io::put_u64(out, d);
  for (double v : t.data()) io::put_f64(out, v);
}

struct Container {
  RssmConfig config;
  std::vector<std::pair<std::string, ad::Tensor>> tensors;
};

Container read_container(std::istream& in) {
  io::expect_magic(in, kMagic, "checkpoint");
  const auto version = io::get_u32(in);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Container c;
  c.config.obs_dim = io::get_u64(in);
  c.config.action_dim = io::get_u64(in);
  c.config.h_dim = io::get_u64(in);
  c.config.s_dim = io::get_u64(in);
  c.config.hidden_dim = io::get_u64(in);
  c.config.min_std = io::get_f64(in);
  c.config.free_nats = io::get_f64(in);
  c.config.reward_scale = io::get_f64(in);
  c.config.obs_std = io::get_f64(in);
  try {
    c.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid config: ") + e.what());
  }
  const auto count = io::get_u32(in);
  for (std::uint32_t n = 0; n < count; ++n) {
    const auto len = io::get_u32(in);
    if (len == 0 || len > kMaxName) throw FormatError("checkpoint: bad tensor name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("checkpoint: unexpected end of file");
    const auto rank = io::get_u32(in);
    if (rank > kMaxRank) throw FormatError("checkpoint: bad rank for " + name);
    ad::Shape shape(rank);
    for (auto& d : shape) d = io::get_u64(in);
    std::vector<double> data(ad::numel(shape));
    for (auto& v : data) v = io::get_f64(in);
    c.tensors.emplace_back(std::move(name), ad::Tensor(std::move(shape), std::move(data)));
  }
  return c;
}

ModelParams assemble(const RssmConfig& config,
                     const std::vector<std::pair<std::string, ad::Tensor>>& tensors,
                     const std::string& prefix) {
  ModelParams p{config, {}};
  for (const auto& [name, shape] : parameter_layout(config)) {
    const std::string full = prefix + name;
    auto it = std::find_if(tensors.begin(), tensors.end(),
                           [&](const auto& e) { return e.first == full; });
    if (it == tensors.end()) throw FormatError("checkpoint: missing tensor " + full);
    p.weights.add(name, it->second);
  }
  try {
    p.check();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return p;
}

std::string member_prefix(std::size_t i) { return "member" + std::to_string(i) + "/"; }

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params) {
  params.check();
  write_header(out, params.config, static_cast<std::uint32_t>(params.weights.size()));
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    write_tensor(out, params.weights.name(i), params.weights[i]);
  }
}

ModelParams read_checkpoint(std::istream& in) {
  auto c = read_container(in);
  if (c.tensors.size() != parameter_layout(c.config).size()) {
    throw FormatError("checkpoint: unexpected tensor count " + std::to_string(c.tensors.size()));
  }
  return assemble(c.config, c.tensors, "");
}

void write_ensemble_checkpoint(std::ostream& out, std::span<const ModelParams> members) {
  if (members.empty()) throw Error("ensemble checkpoint: no members");
  std::uint32_t count = 0;
  for (const auto& m : members) {
    m.check();
    if (!(m.config == members[0].config)) {
      throw Error("ensemble checkpoint: members have different configurations");
    }
    count += static_cast<std::uint32_t>(m.weights.size());
  }
  write_header(out, members[0].config, count);
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = 0; j < members[i].weights.size(); ++j) {
      write_tensor(out, member_prefix(i) + members[i].weights.name(j), members[i].weights[j]);
    }
  }
}

std::vector<ModelParams> read_ensemble_checkpoint(std::istream& in) {
  auto c = read_container(in);
  const std::size_t per = parameter_layout(c.config).size();
  if (c.tensors.empty() || c.tensors.size() % per != 0) {
    throw FormatError("checkpoint: tensor count " + std::to_string(c.tensors.size()) +
                      " is not a whole number of members");
  }
  std::vector<ModelParams> members;
  for (std::size_t i = 0; i < c.tensors.size() / per; ++i) {
    members.push_back(assemble(c.config, c.tensors, member_prefix(i)));
  }
  return members;
}

void save_ensemble(const std::filesystem::path& path, std::span<const ModelParams> members) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp + " for writing");
    write_ensemble_checkpoint(out, members);
    if (!out) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<ModelParams> load_ensemble(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return read_ensemble_checkpoint(in);
}

}  // namespace lmpc
