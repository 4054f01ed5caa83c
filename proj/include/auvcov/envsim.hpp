#pragma once
// Dual-timescale episode simulator. One episode is a fixed number of task
// slots; in each slot the central node delegates a subset of AUVs (the
// high-level action), sub-targets are planned, and the selected AUVs then run
// a low-level control episode in slices of slice_dt seconds: per slice each
// one picks a transmit power and a 3-D thrust velocity.
//
// Slot mechanics, in order:
//   begin_slot  radii from per-AUV compute, randomized sub-target plan,
//               dispatch delay per AUV at the slot's command power over
//               orthogonal sub-channels (band and in-band noise both split
//               across the delegated team)
//   low_step    clamp actions; ground velocity = thrust + current; arrived
//               AUVs hold station (zero ground velocity, thrusting against
//               the current); Euler position update clamped to the box;
//               arrival when within the exploration radius of the own
//               sub-target, which freezes the analytic scan + upload times
//               and charges their energy at the arrival slice's power and
//               link rate; eavesdropper SNR from every transmitter at its
//               post-motion distance; per-AUV rewards
//   end_slot    four-phase delays (dispatch, move, scan, upload; an AUV that
//               never arrived carries the full horizon as movement and no
//               scan/upload), task delay = slowest AUV, coverage, efficiency,
//               high-level reward, fresh task for the next slot
//
// Exposure vs cost: an active AUV is treated as a transmitter from dispatch
// until its upload completes (detectability), but only the upload itself is
// billed for electrical energy, matching the cost model in mission.hpp.
// Standby AUVs neither move nor spend.
//
// Depletion: once a battery is overdrawn the propulsion cuts out. A dead AUV
// drifts with the current, spends nothing further, cannot scan (so cannot
// arrive), and its status uplink goes silent; an upload already paid for at
// arrival keeps transmitting to the end of its window. The deficit therefore
// stays at whatever the crossing slice left, and the per-slice deficit
// penalty stays bounded.
//
// Determinism: one mt19937_64 stream owned by the environment, reseeded on
// reset; draw order is fixed by the loops below. No other randomness.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "acoustics.hpp"
#include "mission.hpp"
#include "ocean.hpp"
#include "rng.hpp"
#include "vec3.hpp"

namespace auvcov::envsim {

using Eigen::VectorXd;

inline ocean::CurrentField default_current_field() {
  ocean::CurrentField f;
  f.drift = {0.05, -0.03, 0.0};
  f.vortices = {
      {{60.0, 140.0, 0.0}, 80.0, 25.0},
      {{150.0, 60.0, 0.0}, -60.0, 20.0},
  };
  return f;
}

struct WorldConfig {
  int n_auvs = 5;

  double extent = 200.0;  // x, y in [0, extent]
  double depth = 200.0;   // z in [-depth, 0]
  Vec3 central{0.0, 0.0, -20.0};
  Vec3 eavesdropper{70.0, 70.0, -10.0};

  double power_min = 0.01;  // W
  double power_max = 2.0;
  double speed_max = 5.0;  // m/s, bound on thrust speed
  double slice_dt = 2.0;   // s
  // J, initial battery draw range. Deliberately tight: station-keeping for a
  // whole episode costs ~7 kJ, one 100 m transit at 1 m/s about 4 kJ, and a
  // single slice at full thrust over 10 kJ, so speed is the scarce resource.
  double energy_min = 1.0e4;
  double energy_max = 2.0e4;

  int slot_horizon = 10;    // slots per episode
  int slice_horizon = 100;  // slices per slot

  double task_side = 100.0;  // square survey regions
  double task_plane_z = -100.0;
  double command_bits = 1.0e5;
  double command_power = 2.0;  // W, dispatch uplink power

  double compute_min = 5.0;  // per-AUV on-board compute draw range
  double compute_max = 20.0;
  double compute_ref = 10.0;
  double radius_base = 10.0;
  double radius_gain = 2.0;

  double overlap_tol = 0.05;
  int plan_max_tries = 100;

  // Calibration picked so the quiet end of the power band (a few tens of mW)
  // stays comfortably under the detection budget at task-plane ranges while
  // watt-level transmissions from a whole team breach it.
  acoustics::AcousticParams channel{30.0, 1.5, 1.0e7, 0.5, 0.0, 3.0e-12};
  acoustics::CovertnessParams covert{};
  mission::EnergyParams energy{};
  ocean::CurrentField current = default_current_field();

  // High-level reward: w_coverage * coverage + w_delay * T_task + w_low *
  // mean cumulative low-level reward of the delegated AUVs.
  double w_coverage = 10.0;
  double w_delay = -0.01;
  double w_low = 0.1;

  // Low-level reward terms: team covertness indicator, progress toward the
  // own sub-target, one-time arrival bonus, energy-deficit penalty.
  double w_covert = 0.5;
  double w_progress = 0.1;
  double w_arrival = 10.0;
  double w_energy = 0.01;

  std::uint64_t seed = 1;

  WorldBox box() const { return {extent, depth}; }
  double diagonal() const { return box().diagonal(); }

  void validate() const {
    if (n_auvs < 1) throw std::domain_error("WorldConfig: need an AUV");
    if (extent <= 0.0 || depth <= 0.0)
      throw std::domain_error("WorldConfig: non-positive world size");
    if (!box().contains(central) || !box().contains(eavesdropper))
      throw std::domain_error("WorldConfig: fixed node outside the box");
    if (power_min < 0.0 || power_min >= power_max)
      throw std::domain_error("WorldConfig: bad power range");
    if (speed_max <= 0.0) throw std::domain_error("WorldConfig: bad V_max");
    if (slice_dt <= 0.0) throw std::domain_error("WorldConfig: bad slice_dt");
    if (energy_min <= 0.0 || energy_min > energy_max)
      throw std::domain_error("WorldConfig: bad energy range");
    if (slot_horizon < 1 || slice_horizon < 1)
      throw std::domain_error("WorldConfig: bad horizon");
    if (task_side <= 0.0 || task_side > extent)
      throw std::domain_error("WorldConfig: task region does not fit");
    if (task_plane_z < -depth || task_plane_z > 0.0)
      throw std::domain_error("WorldConfig: task plane outside the box");
    if (command_bits <= 0.0 || command_power <= 0.0)
      throw std::domain_error("WorldConfig: bad command parameters");
    if (compute_min <= 0.0 || compute_min > compute_max)
      throw std::domain_error("WorldConfig: bad compute range");
    if (radius_base <= 0.0 || compute_ref <= 0.0)
      throw std::domain_error("WorldConfig: bad radius parameters");
    if (overlap_tol < 0.0 || plan_max_tries < 1)
      throw std::domain_error("WorldConfig: bad planner parameters");
    channel.validate();
    covert.validate();
    energy.validate();
    current.validate();
  }
};

// ---------------------------------------------------------------------------

struct AuvState {
  Vec3 position;
  Vec3 velocity;  // commanded thrust (water-relative), not ground velocity
  double energy = 0.0;
  double compute = 0.0;
  double radius = 0.0;  // exploration radius, fixed by compute at reset
  bool selected = false;
  bool arrived = false;
};

// What the central node sees between slots: every AUV's position and
// remaining energy. features() packs it as [x, y, z, E] per AUV, each
// normalized to about [-1, 1].
struct HighLevelState {
  std::vector<Vec3> positions;
  std::vector<double> energies;

  VectorXd features(const WorldConfig& cfg) const {
    VectorXd f(4 * positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
      f[4 * i + 0] = positions[i].x / cfg.extent;
      f[4 * i + 1] = positions[i].y / cfg.extent;
      f[4 * i + 2] = positions[i].z / cfg.depth;
      f[4 * i + 3] = std::clamp(energies[i] / cfg.energy_max, -1.0, 1.0);
    }
    return f;
  }
};

// Per-AUV partial observation during a slot. features() is the 12-entry
// vector [d_central/diag, d_subtarget/diag, x/ext, y/ext, z/depth,
// thrust/Vmax (3), energy feature, local current/Vmax (3)]. The energy
// feature is E/Emax while the battery lasts and -log1p(-E/Emax) once it is
// overdrawn: the critic has to see how deep a debt is (the depletion
// penalty scales with it), but a raw ratio reaching -100 would saturate
// every tanh unit downstream, so the debt branch is log-compressed.
struct LowLevelObs {
  int auv = 0;
  double dist_central = 0.0;
  double dist_subtarget = 0.0;
  Vec3 position;
  Vec3 velocity;
  Vec3 current;
  double energy = 0.0;

  static constexpr int kDim = 12;

  VectorXd features(const WorldConfig& cfg) const {
    VectorXd f(kDim);
    const double diag = cfg.diagonal();
    f[0] = dist_central / diag;
    f[1] = dist_subtarget / diag;
    f[2] = position.x / cfg.extent;
    f[3] = position.y / cfg.extent;
    f[4] = position.z / cfg.depth;
    f[5] = velocity.x / cfg.speed_max;
    f[6] = velocity.y / cfg.speed_max;
    f[7] = velocity.z / cfg.speed_max;
    const double er = energy / cfg.energy_max;
    f[8] = er >= 0.0 ? er : -std::log1p(-er);
    f[9] = current.x / cfg.speed_max;
    f[10] = current.y / cfg.speed_max;
    f[11] = current.z / cfg.speed_max;
    return f;
  }
};

struct HighLevelAction {
  std::vector<int> select;  // one 0/1 entry per AUV

  int count() const {
    int c = 0;
    for (int b : select) c += b != 0;
    return c;
  }
};

struct LowLevelAction {
  double power = 0.0;  // W, clamped into [power_min, power_max]
  Vec3 velocity;       // thrust, clamped to speed_max
};

struct SliceInfo {
  double gamma_e = 0.0;
  double kl = 0.0;
  bool covert = true;
  bool communicating = false;
  int arrivals = 0;
};

struct StepResult {
  std::vector<LowLevelObs> obs;  // one per delegated AUV, in begin_slot order
  std::vector<double> rewards;
  bool done = false;
  SliceInfo info;
};

struct SlotSummary {
  int slot = 0;
  int selected_count = 0;
  int completed_count = 0;  // arrived and finished uploading within horizon
  double coverage_raw = 0.0;
  double coverage = 0.0;  // clamped at 1
  double task_delay = 0.0;
  double efficiency = 0.0;
  double avg_low_reward = 0.0;
  double high_reward = 0.0;
  int slices = 0;
  int covert_slices = 0;         // communicating slices within the KL budget
  int communicating_slices = 0;  // slices with at least one transmitter
  bool all_completed = false;
};

struct SlotResult {
  HighLevelState next_state;
  double reward = 0.0;
  SlotSummary summary;
  bool episode_done = false;
};

// One trace row per slice: slot-level fields, then per AUV
// x, y, z, vx, vy, vz (thrust), power, energy. Standby AUVs show their
// parked state and zero power.
struct TraceRow {
  int slot = 0;
  int slice = 0;
  double gamma_e = 0.0;
  double kl = 0.0;
  int covert = 1;
  std::vector<double> auv_cols;
};

inline std::string trace_csv_header(int n_auvs) {
  std::string h = "slot,slice,gamma_e,kl,covert";
  for (int i = 0; i < n_auvs; ++i) {
    const std::string p = ",auv" + std::to_string(i) + "_";
    h += p + "x" + p + "y" + p + "z" + p + "vx" + p + "vy" + p + "vz" + p +
         "power" + p + "energy";
  }
  return h;
}

// ---------------------------------------------------------------------------

class Environment {
 public:
  explicit Environment(WorldConfig cfg) : cfg_(std::move(cfg)), rng_(0) {
    cfg_.validate();
  }

  const WorldConfig& config() const { return cfg_; }
  const std::vector<AuvState>& auvs() const { return auvs_; }
  const mission::TaskCommand& task() const { return task_; }
  const mission::SubTargetPlan& plan() const { return plan_; }
  const std::vector<int>& delegated() const { return active_; }
  const std::vector<double>& energy_spent() const { return spent_; }
  int slots_completed() const { return slots_done_; }
  int slices_this_slot() const { return slice_; }
  bool slot_open() const { return slot_open_; }
  bool slot_finished() const { return slot_finished_; }
  bool episode_done() const { return slots_done_ >= cfg_.slot_horizon; }

  void set_trace_sink(std::vector<TraceRow>* sink) { trace_ = sink; }

  HighLevelState reset() { return reset(cfg_.seed); }

  HighLevelState reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    auvs_.assign(cfg_.n_auvs, AuvState{});
    for (auto& a : auvs_) {
      a.position = {rng_.uniform(0.0, cfg_.extent),
                    rng_.uniform(0.0, cfg_.extent),
                    rng_.uniform(-cfg_.depth, 0.0)};
      a.velocity = {};
      a.energy = rng_.uniform(cfg_.energy_min, cfg_.energy_max);
      a.compute = rng_.uniform(cfg_.compute_min, cfg_.compute_max);
      a.radius = mission::exploration_radius(a.compute, cfg_.radius_base,
                                             cfg_.radius_gain, cfg_.compute_ref);
      a.selected = a.arrived = false;
    }
    spent_.assign(cfg_.n_auvs, 0.0);
    task_ = sample_task();
    slots_done_ = 0;
    slice_ = 0;
    slot_open_ = slot_finished_ = false;
    ready_ = true;
    return state();
  }

  HighLevelState state() const {
    HighLevelState s;
    for (const auto& a : auvs_) {
      s.positions.push_back(a.position);
      s.energies.push_back(a.energy);
    }
    return s;
  }

  std::vector<LowLevelObs> begin_slot(const HighLevelAction& action) {
    if (!ready_) throw std::logic_error("begin_slot: reset first");
    if (slot_open_) throw std::logic_error("begin_slot: slot already open");
    if (episode_done()) throw std::logic_error("begin_slot: episode over");
    if (static_cast<int>(action.select.size()) != cfg_.n_auvs)
      throw std::invalid_argument("begin_slot: selection size mismatch");
    if (action.count() < 1)
      throw std::invalid_argument("begin_slot: empty delegation");

    active_.clear();
    for (int i = 0; i < cfg_.n_auvs; ++i) {
      auvs_[i].selected = action.select[i] != 0;
      auvs_[i].arrived = false;
      if (auvs_[i].selected) active_.push_back(i);
    }
    const int team = static_cast<int>(active_.size());

    std::vector<double> radii;
    for (int i : active_) radii.push_back(auvs_[i].radius);
    plan_ = mission::plan_subtargets(task_, radii, rng_.next_u64(),
                                     cfg_.overlap_tol, cfg_.plan_max_tries);

    // The planner packs discs without knowing who goes where; give each
    // delegated AUV the nearest unclaimed disc so assignments don't cross.
    {
      std::vector<char> taken(team, 0);
      std::vector<mission::SubTarget> ordered(team);
      for (int k = 0; k < team; ++k) {
        int best = -1;
        double best_d = 0.0;
        for (int j = 0; j < team; ++j) {
          if (taken[j]) continue;
          const double d =
              distance(auvs_[active_[k]].position, plan_.targets[j].center);
          if (best < 0 || d < best_d) {
            best = j;
            best_d = d;
          }
        }
        taken[best] = 1;
        ordered[k] = plan_.targets[best];
      }
      plan_.targets = std::move(ordered);
    }

    slot_.clear();
    for (int k = 0; k < team; ++k) {
      SlotAuv sa;
      sa.auv = active_[k];
      const auto& a = auvs_[sa.auv];
      const double d_nc = std::max(distance(a.position, cfg_.central), 1e-6);
      const double rate =
          acoustics::link_rate(cfg_.command_power, d_nc, team, cfg_.channel);
      sa.dispatch =
          mission::dispatch_delay(d_nc, task_.command_bits, rate, cfg_.energy);
      sa.dist_prev = distance(a.position, plan_.targets[k].center);
      slot_.push_back(sa);
    }

    slice_ = 0;
    covert_slices_ = comm_slices_ = 0;
    slot_open_ = true;
    slot_finished_ = false;
    return observations();
  }

  StepResult low_step(const std::vector<LowLevelAction>& actions) {
    if (!slot_open_) throw std::logic_error("low_step: no open slot");
    if (slot_finished_) throw std::logic_error("low_step: slot already done");
    if (actions.size() != slot_.size())
      throw std::invalid_argument("low_step: one action per delegated AUV");

    const int s = slice_ + 1;  // 1-based slice index
    const int team = static_cast<int>(slot_.size());
    const double dt = cfg_.slice_dt;

    std::vector<int> transmitting(cfg_.n_auvs, 0);
    std::vector<double> powers(cfg_.n_auvs, 0.0);
    std::vector<double> eav_dist(cfg_.n_auvs, 1.0);
    std::vector<int> first_arrival(team, 0);

    for (int k = 0; k < team; ++k) {
      SlotAuv& sa = slot_[k];
      AuvState& a = auvs_[sa.auv];
      const bool dead = a.energy <= 0.0;

      const double p =
          std::clamp(actions[k].power, cfg_.power_min, cfg_.power_max);
      Vec3 thrust = actions[k].velocity;
      const double speed = thrust.norm();
      if (speed > cfg_.speed_max) thrust *= cfg_.speed_max / speed;

      const Vec3 water = ocean::current_at(a.position, cfg_.current);
      Vec3 ground;
      if (dead) {
        // Propulsion cut: drift with the current.
        thrust = {};
        ground = water;
      } else if (a.arrived) {
        // Station keeping: cancel the current, stay put.
        thrust = -water;
        ground = {};
      } else {
        ground = thrust + water;
      }
      a.velocity = thrust;
      a.position = ocean::integrate_position(a.position, ground, dt, cfg_.box());

      // Thrust is exactly the water-relative velocity, so drag acts on it.
      double drain =
          dead ? 0.0
               : mission::mobility_energy(ground, thrust, dt, cfg_.energy)
                     .total();

      if (!dead && !a.arrived &&
          distance(a.position, plan_.targets[k].center) <= a.radius) {
        a.arrived = true;
        sa.arrive_slice = s;
        first_arrival[k] = 1;
        const double d_nc = std::max(distance(a.position, cfg_.central), 1e-6);
        const double rate = acoustics::link_rate(p, d_nc, team, cfg_.channel);
        const double bits = mission::collected_data_bits(a.radius, cfg_.energy);
        sa.scan = mission::scan_delay(cfg_.energy);
        sa.upload = mission::upload_delay(bits, rate, d_nc, cfg_.energy);
        const double busy = (sa.scan + sa.upload) / dt;
        sa.busy_until =
            s - 1 + (std::isfinite(busy)
                         ? static_cast<int>(std::min(std::ceil(busy), 1.0e9))
                         : 1000000000);
        drain += mission::exploration_energy(a.radius, cfg_.energy);
        const double ue = mission::upload_energy(p, bits, rate, cfg_.energy);
        drain += std::isfinite(ue) ? ue : 0.0;
      }

      a.energy = mission::remaining_energy(a.energy, drain, 0.0, 0.0);
      spent_[sa.auv] += drain;

      const bool tx = dead ? (a.arrived && s <= sa.busy_until)
                           : (!a.arrived || s <= sa.busy_until);
      transmitting[sa.auv] = tx ? 1 : 0;
      powers[sa.auv] = tx ? p : 0.0;
      sa.last_power = powers[sa.auv];
    }

    for (int i = 0; i < cfg_.n_auvs; ++i)
      eav_dist[i] = std::max(distance(auvs_[i].position, cfg_.eavesdropper),
                             1e-6);

    StepResult out;
    out.info.gamma_e =
        acoustics::eavesdropper_snr(transmitting, powers, eav_dist, cfg_.channel);
    out.info.kl = acoustics::kl_divergence(out.info.gamma_e);
    out.info.covert = acoustics::covert(out.info.kl, cfg_.covert);
    out.info.communicating =
        std::any_of(transmitting.begin(), transmitting.end(),
                    [](int t) { return t != 0; });
    if (out.info.communicating) {
      ++comm_slices_;
      if (out.info.covert) ++covert_slices_;
    }

    out.rewards.resize(team);
    for (int k = 0; k < team; ++k) {
      SlotAuv& sa = slot_[k];
      const AuvState& a = auvs_[sa.auv];
      const double d_curr = distance(a.position, plan_.targets[k].center);
      out.rewards[k] = low_reward(out.info.covert, sa.dist_prev, d_curr,
                                  first_arrival[k] != 0, a.energy, cfg_);
      sa.dist_prev = d_curr;
      sa.cum_reward += out.rewards[k];
      out.info.arrivals += first_arrival[k];
    }

    slice_ = s;
    bool all_done = true;
    for (const auto& sa : slot_)
      all_done = all_done && sa.arrive_slice > 0 && s >= sa.busy_until;
    slot_finished_ = all_done || s >= cfg_.slice_horizon;
    out.done = slot_finished_;

    if (trace_) {
      TraceRow row;
      row.slot = slots_done_ + 1;
      row.slice = s;
      row.gamma_e = out.info.gamma_e;
      row.kl = out.info.kl;
      row.covert = out.info.covert ? 1 : 0;
      for (int i = 0; i < cfg_.n_auvs; ++i) {
        const auto& a = auvs_[i];
        row.auv_cols.insert(row.auv_cols.end(),
                            {a.position.x, a.position.y, a.position.z,
                             a.velocity.x, a.velocity.y, a.velocity.z,
                             powers[i], a.energy});
      }
      trace_->push_back(std::move(row));
    }

    out.obs = observations();
    return out;
  }

  SlotResult end_slot() {
    if (!slot_open_) throw std::logic_error("end_slot: no open slot");
    if (!slot_finished_) throw std::logic_error("end_slot: slot still running");

    const double dt = cfg_.slice_dt;
    std::vector<mission::PhaseDelays> phases;
    int completed = 0;
    double reward_sum = 0.0;
    for (const auto& sa : slot_) {
      mission::PhaseDelays pd;
      pd.dispatch = sa.dispatch;
      if (sa.arrive_slice > 0) {
        pd.move = sa.arrive_slice * dt;
        pd.scan = sa.scan;
        pd.upload = sa.upload;
        if (sa.busy_until <= slice_) ++completed;
      } else {
        pd.move = slice_ * dt;
      }
      phases.push_back(pd);
      reward_sum += sa.cum_reward;
    }

    std::vector<int> selection(cfg_.n_auvs, 0);
    std::vector<double> radii(cfg_.n_auvs, 0.0);
    for (const auto& sa : slot_) {
      selection[sa.auv] = 1;
      radii[sa.auv] = auvs_[sa.auv].radius;
    }

    SlotResult out;
    auto& sm = out.summary;
    sm.slot = slots_done_ + 1;
    sm.selected_count = static_cast<int>(slot_.size());
    sm.completed_count = completed;
    sm.all_completed = completed == sm.selected_count;
    sm.coverage_raw = mission::coverage(selection, radii, task_);
    sm.coverage = std::min(sm.coverage_raw, 1.0);
    sm.task_delay = mission::task_delay(phases);
    sm.efficiency = mission::cooperation_efficiency(sm.coverage, sm.task_delay);
    sm.avg_low_reward = reward_sum / static_cast<double>(slot_.size());
    sm.high_reward = cfg_.w_coverage * sm.coverage +
                     cfg_.w_delay * sm.task_delay + cfg_.w_low * sm.avg_low_reward;
    sm.slices = slice_;
    sm.covert_slices = covert_slices_;
    sm.communicating_slices = comm_slices_;

    out.reward = sm.high_reward;

    for (auto& a : auvs_) a.selected = false;
    slot_open_ = false;
    ++slots_done_;
    task_ = sample_task();

    out.next_state = state();
    out.episode_done = episode_done();
    return out;
  }

  // Per-slice reward of one delegated AUV. The covertness term is shared by
  // the whole team (the KL test is on the superposed signal); progress and
  // arrival are private; the energy term only bites once the battery is
  // overdrawn.
  static double low_reward(bool covert, double dist_prev, double dist_curr,
                           bool first_arrival, double energy,
                           const WorldConfig& cfg) {
    double r = cfg.w_covert * (covert ? 1.0 : 0.0) +
               cfg.w_progress * (dist_prev - dist_curr);
    if (first_arrival) r += cfg.w_arrival;
    r -= cfg.w_energy * std::max(-energy, 0.0);
    return r;
  }

 private:
  struct SlotAuv {
    int auv = 0;
    double dispatch = 0.0;
    double dist_prev = 0.0;
    int arrive_slice = 0;  // 1-based; 0 = not arrived
    double scan = 0.0;
    double upload = 0.0;
    int busy_until = 0;  // last transmitting slice (scan + upload folded)
    double cum_reward = 0.0;
    double last_power = 0.0;
  };

  mission::TaskCommand sample_task() {
    mission::TaskCommand t;
    const double half = 0.5 * cfg_.task_side;
    t.center = {rng_.uniform(half, cfg_.extent - half),
                rng_.uniform(half, cfg_.extent - half), cfg_.task_plane_z};
    t.length = t.width = cfg_.task_side;
    t.command_bits = cfg_.command_bits;
    return t;
  }

  std::vector<LowLevelObs> observations() const {
    std::vector<LowLevelObs> obs;
    for (std::size_t k = 0; k < slot_.size(); ++k) {
      const auto& a = auvs_[slot_[k].auv];
      LowLevelObs o;
      o.auv = slot_[k].auv;
      o.dist_central = distance(a.position, cfg_.central);
      o.dist_subtarget = distance(a.position, plan_.targets[k].center);
      o.position = a.position;
      o.velocity = a.velocity;
      o.current = ocean::current_at(a.position, cfg_.current);
      o.energy = a.energy;
      obs.push_back(o);
    }
    return obs;
  }

  WorldConfig cfg_;
  Rng rng_;
  std::vector<AuvState> auvs_;
  mission::TaskCommand task_;
  mission::SubTargetPlan plan_;
  std::vector<int> active_;
  std::vector<SlotAuv> slot_;
  std::vector<double> spent_;
  std::vector<TraceRow>* trace_ = nullptr;
  int slots_done_ = 0;
  int slice_ = 0;
  int covert_slices_ = 0;
  int comm_slices_ = 0;
  bool slot_open_ = false;
  bool slot_finished_ = false;
  bool ready_ = false;
};

}  // namespace auvcov::envsim
