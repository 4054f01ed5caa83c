#pragma once
// Flat key-value configuration covering the world and the trainer.
//
// Grammar, one entry per line:
//   section.key = value        # trailing comments allowed
// Blank lines and lines starting with '#' are skipped. Keys are dotted and
// flat (no nesting syntax); unknown keys are rejected, which catches typos
// early. Values are doubles, integers, booleans (true/false/1/0) or unsigned
// 64-bit seeds depending on the key.
//
// Precedence: built-in defaults, then the file, then explicit overrides
// (CLI), then the profile, which only fills keys nobody has touched.
// Diagnostics are prefixed "parse error:", "unknown key:" or
// "invalid config:" so failures are tellable apart.

#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "envsim.hpp"
#include "hmappo.hpp"
#include "version.hpp"

namespace auvcov::harness {

struct Config {
  envsim::WorldConfig world;
  hmappo::TrainConfig train;

  void validate() const {
    try {
      world.validate();
      train.validate();
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("invalid config: ") + e.what());
    }
  }
};

namespace detail {

enum class Kind { Double, Int, Bool, U64 };

struct Key {
  std::string name;
  Kind kind;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("parse error: key '" + key +
                             "': not a number: '" + v + "'");
  }
  if (pos != v.size())
    throw std::runtime_error("parse error: key '" + key +
                             "': trailing characters in '" + v + "'");
  return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("parse error: key '" + key +
                             "': not an integer: '" + v + "'");
  }
  if (pos != v.size())
    throw std::runtime_error("parse error: key '" + key +
                             "': trailing characters in '" + v + "'");
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("parse error: key '" + key +
                             "': not an unsigned integer: '" + v + "'");
  }
  if (pos != v.size())
    throw std::runtime_error("parse error: key '" + key +
                             "': trailing characters in '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error("parse error: key '" + key +
                           "': not a boolean: '" + v + "'");
}

#define AUVCOV_KEY_D(NAME, FIELD)                                       \
  Key{NAME, Kind::Double,                                               \
      [](Config& c, const std::string& v) {                            \
        c.FIELD = parse_double(NAME, v);                               \
      },                                                                \
      [](const Config& c) { return format_double(c.FIELD); }}

#define AUVCOV_KEY_I(NAME, FIELD)                                       \
  Key{NAME, Kind::Int,                                                  \
      [](Config& c, const std::string& v) {                            \
        c.FIELD = static_cast<int>(parse_int(NAME, v));                \
      },                                                                \
      [](const Config& c) { return std::to_string(c.FIELD); }}

#define AUVCOV_KEY_B(NAME, FIELD)                                       \
  Key{NAME, Kind::Bool,                                                 \
      [](Config& c, const std::string& v) {                            \
        c.FIELD = parse_bool(NAME, v);                                 \
      },                                                                \
      [](const Config& c) { return c.FIELD ? "true" : "false"; }}

#define AUVCOV_KEY_U(NAME, FIELD)                                       \
  Key{NAME, Kind::U64,                                                  \
      [](Config& c, const std::string& v) {                            \
        c.FIELD = parse_u64(NAME, v);                                  \
      },                                                                \
      [](const Config& c) { return std::to_string(c.FIELD); }}

inline const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      AUVCOV_KEY_I("world.n_auvs", world.n_auvs),
      AUVCOV_KEY_D("world.extent", world.extent),
      AUVCOV_KEY_D("world.depth", world.depth),
      AUVCOV_KEY_D("world.central_x", world.central.x),
      AUVCOV_KEY_D("world.central_y", world.central.y),
      AUVCOV_KEY_D("world.central_z", world.central.z),
      AUVCOV_KEY_D("world.eavesdropper_x", world.eavesdropper.x),
      AUVCOV_KEY_D("world.eavesdropper_y", world.eavesdropper.y),
      AUVCOV_KEY_D("world.eavesdropper_z", world.eavesdropper.z),
      AUVCOV_KEY_D("world.power_min", world.power_min),
      AUVCOV_KEY_D("world.power_max", world.power_max),
      AUVCOV_KEY_D("world.speed_max", world.speed_max),
      AUVCOV_KEY_D("world.slice_dt", world.slice_dt),
      AUVCOV_KEY_D("world.energy_min", world.energy_min),
      AUVCOV_KEY_D("world.energy_max", world.energy_max),
      AUVCOV_KEY_I("world.slot_horizon", world.slot_horizon),
      AUVCOV_KEY_I("world.slice_horizon", world.slice_horizon),
      AUVCOV_KEY_D("world.task_side", world.task_side),
      AUVCOV_KEY_D("world.task_plane_z", world.task_plane_z),
      AUVCOV_KEY_D("world.command_bits", world.command_bits),
      AUVCOV_KEY_D("world.command_power", world.command_power),
      AUVCOV_KEY_D("world.compute_min", world.compute_min),
      AUVCOV_KEY_D("world.compute_max", world.compute_max),
      AUVCOV_KEY_D("world.compute_ref", world.compute_ref),
      AUVCOV_KEY_D("world.radius_base", world.radius_base),
      AUVCOV_KEY_D("world.radius_gain", world.radius_gain),
      AUVCOV_KEY_D("world.overlap_tol", world.overlap_tol),
      AUVCOV_KEY_I("world.plan_max_tries", world.plan_max_tries),
      AUVCOV_KEY_D("world.w_coverage", world.w_coverage),
      AUVCOV_KEY_D("world.w_delay", world.w_delay),
      AUVCOV_KEY_D("world.w_low", world.w_low),
      AUVCOV_KEY_D("world.w_covert", world.w_covert),
      AUVCOV_KEY_D("world.w_progress", world.w_progress),
      AUVCOV_KEY_D("world.w_arrival", world.w_arrival),
      AUVCOV_KEY_D("world.w_energy", world.w_energy),
      AUVCOV_KEY_U("world.seed", world.seed),
      AUVCOV_KEY_D("channel.frequency_khz", world.channel.frequency_khz),
      AUVCOV_KEY_D("channel.spreading", world.channel.spreading),
      AUVCOV_KEY_D("channel.bandwidth_hz", world.channel.bandwidth_hz),
      AUVCOV_KEY_D("channel.shipping", world.channel.shipping),
      AUVCOV_KEY_D("channel.wind_speed", world.channel.wind_speed),
      AUVCOV_KEY_D("channel.noise_calibration",
                   world.channel.noise_calibration),
      AUVCOV_KEY_D("covert.epsilon", world.covert.epsilon),
      AUVCOV_KEY_D("energy.weight_force", world.energy.weight_force),
      AUVCOV_KEY_D("energy.water_density", world.energy.water_density),
      AUVCOV_KEY_D("energy.cross_section", world.energy.cross_section),
      AUVCOV_KEY_D("energy.drag_coefficient", world.energy.drag_coefficient),
      AUVCOV_KEY_D("energy.scan_energy_density",
                   world.energy.scan_energy_density),
      AUVCOV_KEY_D("energy.power_efficiency", world.energy.power_efficiency),
      AUVCOV_KEY_D("energy.data_density", world.energy.data_density),
      AUVCOV_KEY_D("energy.scan_rate", world.energy.scan_rate),
      AUVCOV_KEY_D("energy.sound_speed", world.energy.sound_speed),
      AUVCOV_KEY_D("current.drift_x", world.current.drift.x),
      AUVCOV_KEY_D("current.drift_y", world.current.drift.y),
      AUVCOV_KEY_D("current.drift_z", world.current.drift.z),
      AUVCOV_KEY_I("train.episodes", train.episodes),
      AUVCOV_KEY_D("train.lr_actor", train.lr_actor),
      AUVCOV_KEY_D("train.lr_critic", train.lr_critic),
      AUVCOV_KEY_D("train.discount", train.discount),
      AUVCOV_KEY_D("train.clip", train.clip),
      AUVCOV_KEY_D("train.gae_lambda", train.gae_lambda),
      AUVCOV_KEY_I("train.batch_auv", train.batch_auv),
      AUVCOV_KEY_I("train.batch_central", train.batch_central),
      AUVCOV_KEY_I("train.epochs", train.epochs),
      AUVCOV_KEY_I("train.minibatch", train.minibatch),
      AUVCOV_KEY_D("train.entropy_coef", train.entropy_coef),
      AUVCOV_KEY_D("train.grad_clip", train.grad_clip),
      AUVCOV_KEY_D("train.value_scale", train.value_scale),
      AUVCOV_KEY_D("train.std_floor", train.std_floor),
      AUVCOV_KEY_B("train.shared_actor", train.shared_actor),
      AUVCOV_KEY_I("train.hidden1", train.hidden1),
      AUVCOV_KEY_I("train.hidden2", train.hidden2),
      AUVCOV_KEY_I("train.checkpoint_every", train.checkpoint_every),
      AUVCOV_KEY_U("train.seed", train.seed),
  };
  return keys;
}

#undef AUVCOV_KEY_D
#undef AUVCOV_KEY_I
#undef AUVCOV_KEY_B
#undef AUVCOV_KEY_U

inline const Key& find_key(const std::string& name) {
  for (const auto& k : registry())
    if (k.name == name) return k;
  throw std::runtime_error("unknown key: '" + name + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Tracks which keys have been explicitly assigned, so profiles can defer.
class ConfigBuilder {
 public:
  Config& config() { return cfg_; }
  const Config& config() const { return cfg_; }
  const std::set<std::string>& keys_set() const { return set_; }

  void set(const std::string& key, const std::string& value) {
    detail::find_key(key).set(cfg_, value);
    set_.insert(key);
  }

  // Sets only if nothing (file, CLI) already touched the key.
  void set_default(const std::string& key, const std::string& value) {
    if (set_.count(key)) return;
    detail::find_key(key).set(cfg_, value);
  }

  void load_stream(std::istream& is, const std::string& origin) {
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("parse error: " + origin + ":" +
                                 std::to_string(lineno) + ": expected key = value");
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty() || value.empty())
        throw std::runtime_error("parse error: " + origin + ":" +
                                 std::to_string(lineno) + ": empty key or value");
      set(key, value);
    }
  }

  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("parse error: cannot open '" + path + "'");
    load_stream(f, path);
  }

  // "key=value" fragments from the command line.
  void apply_override(const std::string& fragment) {
    const auto eq = fragment.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("parse error: override '" + fragment +
                               "': expected key=value");
    set(detail::trim(fragment.substr(0, eq)),
        detail::trim(fragment.substr(eq + 1)));
  }

  // Profiles fill the keys nobody set. "paper" is the full-scale schedule
  // (which equals the built-in defaults); "desk" shortens the run and
  // raises the learning rates to suit a few hundred episodes.
  void apply_profile(const std::string& profile) {
    if (profile == "paper") {
      set_default("train.episodes", "2000");
      set_default("train.lr_actor", "3e-5");
      set_default("train.lr_critic", "5e-5");
    } else if (profile == "desk") {
      set_default("train.episodes", "300");
      set_default("train.lr_actor", "3e-4");
      set_default("train.lr_critic", "5e-4");
      // Lighter entropy bonus: at a few hundred episodes the action stddevs
      // have to shrink quickly or evaluation stays effectively random.
      set_default("train.entropy_coef", "0.001");
    } else if (profile == "none" || profile.empty()) {
      // raw defaults, nothing filled in
    } else {
      throw std::runtime_error("unknown profile: '" + profile + "'");
    }
  }

 private:
  Config cfg_;
  std::set<std::string> set_;
};

// Full snapshot, reparseable by load_stream; the version pin makes a run
// directory self-describing.
inline void dump_config(const Config& cfg, std::ostream& os) {
  os << "# auvcov " << kVersion << " config snapshot\n";
  std::string section;
  for (const auto& k : detail::registry()) {
    const auto dot = k.name.find('.');
    const std::string s = k.name.substr(0, dot);
    if (s != section) {
      os << '\n';
      section = s;
    }
    os << k.name << " = " << k.get(cfg) << '\n';
  }
}

inline Config load_config(const std::string& path) {
  ConfigBuilder b;
  b.load_file(path);
  b.config().validate();
  return b.config();
}

}  // namespace auvcov::harness
