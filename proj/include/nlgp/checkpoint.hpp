#pragma once

// Model checkpoints: a flat, versioned, little-endian container holding the
// JSON-encoded spec, the training-data standardization, and every named fp64
// parameter array behind a length-prefixed name table.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "nlgp/config.hpp"
#include "nlgp/data.hpp"
#include "nlgp/model.hpp"

namespace nlgp::checkpoint {

constexpr char kMagic[8] = {'N', 'L', 'G', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ofstream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ConfigError("checkpoint: truncated file");
  return v;
}

inline void write_string(std::ofstream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::ifstream& in) {
  auto len = read_pod<std::uint64_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw ConfigError("checkpoint: truncated string");
  return s;
}

}  // namespace detail

struct NamedArrays {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> arrays;

  void add(const std::string& name, const Eigen::MatrixXd& m) {
    names.push_back(name);
    arrays.push_back(m);
  }
  const Eigen::MatrixXd* find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return &arrays[i];
    return nullptr;
  }
};

inline void save(const std::string& path, const model::Model& m,
                 const data::Standardization& stats) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  detail::write_pod<std::uint32_t>(out, kVersion);

  nlohmann::json header;
  header["spec"] = config::spec_to_json(m.spec);
  header["n_total"] = m.n_total;
  header["standardized"] = stats.applied;
  detail::write_string(out, header.dump());

  NamedArrays arrays;
  for (const auto& p : m.params) arrays.add(p->name, p->raw.data());
  if (stats.applied) {
    arrays.add("std.x_mean", stats.x_mean);
    arrays.add("std.x_std", stats.x_std);
    arrays.add("std.y_mean", stats.y_mean);
    arrays.add("std.y_std", stats.y_std);
  }

  detail::write_pod<std::uint64_t>(out, arrays.names.size());
  for (std::size_t i = 0; i < arrays.names.size(); ++i) {
    detail::write_string(out, arrays.names[i]);
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(arrays.arrays[i].rows()));
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(arrays.arrays[i].cols()));
  }
  for (const auto& a : arrays.arrays)
    out.write(reinterpret_cast<const char*>(a.data()),
              static_cast<std::streamsize>(sizeof(double) * a.size()));
  if (!out) throw ConfigError("checkpoint: write failed for " + path);
}

struct Loaded {
  model::Model m;
  data::Standardization stats;
};

inline Loaded load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ConfigError("checkpoint: bad magic in " + path);
  const auto version = detail::read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw ConfigError("checkpoint: unsupported version " + std::to_string(version));

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(detail::read_string(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: bad header: ") + e.what());
  }
  model::ModelSpec spec = config::spec_from_json(header.at("spec"));
  const auto n_total = header.at("n_total").get<Eigen::Index>();

  const auto count = detail::read_pod<std::uint64_t>(in);
  NamedArrays arrays;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes;
  for (std::uint64_t i = 0; i < count; ++i) {
    arrays.names.push_back(detail::read_string(in));
    auto rows = detail::read_pod<std::uint64_t>(in);
    auto cols = detail::read_pod<std::uint64_t>(in);
    shapes.emplace_back(rows, cols);
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    Eigen::MatrixXd a(shapes[i].first, shapes[i].second);
    in.read(reinterpret_cast<char*>(a.data()),
            static_cast<std::streamsize>(sizeof(double) * a.size()));
    if (!in) throw ConfigError("checkpoint: truncated array data");
    arrays.arrays.push_back(std::move(a));
  }

  // rebuild the model skeleton on a placeholder dataset, then overwrite
  // every parameter from the stored arrays
  data::Dataset dummy;
  dummy.x = Eigen::MatrixXd::Zero(n_total, spec.latent_inputs ? 0 : spec.d_x);
  dummy.y = Eigen::MatrixXd::Zero(n_total, spec.d_y);
  dummy.mask = Eigen::MatrixXd::Ones(n_total, spec.d_y);
  Loaded out{model::build(spec, dummy, 0), {}};
  for (auto& p : out.m.params) {
    const Eigen::MatrixXd* a = arrays.find(p->name);
    if (!a) throw ConfigError("checkpoint: missing parameter " + p->name);
    if (a->rows() != p->raw.rows() || a->cols() != p->raw.cols())
      throw ConfigError("checkpoint: shape mismatch for " + p->name);
    p->raw.mutable_data() = *a;
  }
  if (header.value("standardized", false)) {
    auto need = [&](const char* name) {
      const Eigen::MatrixXd* a = arrays.find(name);
      if (!a) throw ConfigError(std::string("checkpoint: missing ") + name);
      return Eigen::VectorXd(a->col(0));
    };
    out.stats.x_mean = need("std.x_mean");
    out.stats.x_std = need("std.x_std");
    out.stats.y_mean = need("std.y_mean");
    out.stats.y_std = need("std.y_std");
    out.stats.applied = true;
  }
  return out;
}

}  // namespace nlgp::checkpoint
