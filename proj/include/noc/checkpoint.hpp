#pragma once

// Checkpoint files: line-oriented text, version 1.
//
//   noc-checkpoint 1
//   task linear
//   time_feature 1
//   network controller
//   layers 3 30 1
//   seed 1234
//   updates 20000
//   values 121
//   <one hexadecimal float per line, layer by layer: weights row-major, then biases>
//   network dynamics
//   ...
//   end
//
// Hexadecimal floats make the round trip bit-exact.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "noc/environments.hpp"
#include "noc/errors.hpp"
#include "noc/mlp.hpp"
#include "noc/model.hpp"

namespace noc {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  TaskKind task = TaskKind::linear;
  NocModel model;
};

inline constexpr int kCheckpointVersion = 1;

inline std::string hex_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline void write_network(std::ostream& os, const std::string& name, const MlpParams& p) {
  os << "network " << name << '\n' << "layers";
  for (std::size_t s : p.spec.layer_sizes) os << ' ' << s;
  os << '\n' << "seed " << p.seed << '\n' << "updates " << p.updates << '\n' << "values " << p.values.size() << '\n';
  for (double v : p.values) os << hex_double(v) << '\n';
}

namespace detail {

inline std::string expect_line(std::istream& is, const std::string& keyword) {
  std::string line;
  if (!std::getline(is, line)) throw CheckpointError("checkpoint truncated: expected '" + keyword + "'");
  if (line.rfind(keyword, 0) != 0) throw CheckpointError("checkpoint: expected '" + keyword + "', found '" + line + "'");
  return line.size() > keyword.size() ? line.substr(keyword.size() + 1) : std::string();
}

}  // namespace detail

inline MlpParams read_network(std::istream& is, const std::string& name) {
  if (detail::expect_line(is, "network") != name) throw CheckpointError("checkpoint: expected network '" + name + "'");
  MlpParams p;
  {
    std::stringstream ss(detail::expect_line(is, "layers"));
    std::size_t s;
    while (ss >> s) p.spec.layer_sizes.push_back(s);
  }
  try {
    p.spec.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad layer sizes for ") + name + ": " + e.what());
  }
  p.seed = std::stoull(detail::expect_line(is, "seed"));
  p.updates = std::stoull(detail::expect_line(is, "updates"));
  const std::size_t count = std::stoull(detail::expect_line(is, "values"));
  if (count != p.spec.param_count())
    throw CheckpointError("checkpoint: " + name + " has " + std::to_string(count) + " values, layer sizes need " +
                          std::to_string(p.spec.param_count()));
  p.values.resize(count);
  std::string line;
  for (std::size_t k = 0; k < count; ++k) {
    if (!std::getline(is, line)) throw CheckpointError("checkpoint truncated inside " + name);
    char* end = nullptr;
    p.values[k] = std::strtod(line.c_str(), &end);
    if (end == line.c_str()) throw CheckpointError("checkpoint: bad number '" + line + "' in " + name);
  }
  return p;
}

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os << "noc-checkpoint " << kCheckpointVersion << '\n'
     << "task " << to_string(ck.task) << '\n'
     << "time_feature " << (ck.model.time_feature ? 1 : 0) << '\n';
  write_network(os, "controller", ck.model.controller);
  write_network(os, "dynamics", ck.model.dynamics);
  os << "end\n";
}

inline Checkpoint read_checkpoint(std::istream& is) {
  const std::string version = detail::expect_line(is, "noc-checkpoint");
  if (version != std::to_string(kCheckpointVersion))
    throw CheckpointError("checkpoint: unsupported version '" + version + "'");
  Checkpoint ck;
  try {
    ck.task = task_from_string(detail::expect_line(is, "task"));
  } catch (const UnsupportedTaskError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  ck.model.time_feature = detail::expect_line(is, "time_feature") == "1";
  ck.model.controller = read_network(is, "controller");
  ck.model.dynamics = read_network(is, "dynamics");
  detail::expect_line(is, "end");
  try {
    ck.model.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: inconsistent networks: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path);
  if (!os) throw CheckpointError("cannot write checkpoint '" + path + "'");
  write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(is);
}

}  // namespace noc
