#pragma once
// Mission geometry and cost accounting for one detection task: exploration
// radii from on-board compute, randomized sub-target placement with bounded
// disc overlap, region coverage, the four sequential per-AUV delay phases
// (dispatch, move, scan, upload), and the energy drains (mobility, scanning,
// acoustic upload).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "rng.hpp"
#include "vec3.hpp"

namespace auvcov::mission {

// Rectangular task region on a horizontal plane, plus the size of the task
// command message that has to reach each dispatched AUV.
struct TaskCommand {
  Vec3 center;  // region center; center.z is the survey plane depth
  double length = 100.0;
  double width = 100.0;
  double command_bits = 1.0e5;

  void validate() const {
    if (length <= 0.0 || width <= 0.0)
      throw std::domain_error("TaskCommand: region sides must be positive");
    if (command_bits <= 0.0)
      throw std::domain_error("TaskCommand: command size must be positive");
  }
};

// Exploration radius grows logarithmically with on-board compute:
// r = base + gain * ln(compute / compute_ref + 1). Zero compute gives the
// base radius.
inline double exploration_radius(double compute, double base_radius,
                                 double radius_gain, double compute_ref) {
  if (compute < 0.0)
    throw std::domain_error("exploration_radius: negative compute");
  if (base_radius <= 0.0 || compute_ref <= 0.0)
    throw std::domain_error("exploration_radius: non-positive parameter");
  return base_radius + radius_gain * std::log(compute / compute_ref + 1.0);
}

// Area of the intersection of two discs whose centers are `dist` apart.
inline double disc_overlap_area(double dist, double r1, double r2) {
  if (r1 < 0.0 || r2 < 0.0 || dist < 0.0)
    throw std::domain_error("disc_overlap_area: negative argument");
  if (r1 == 0.0 || r2 == 0.0) return 0.0;
  if (dist >= r1 + r2) return 0.0;
  const double rmin = std::min(r1, r2);
  if (dist <= std::abs(r1 - r2)) return std::numbers::pi * rmin * rmin;
  const double d2 = dist * dist;
  const double a1 = std::acos(
      std::clamp((d2 + r1 * r1 - r2 * r2) / (2.0 * dist * r1), -1.0, 1.0));
  const double a2 = std::acos(
      std::clamp((d2 + r2 * r2 - r1 * r1) / (2.0 * dist * r2), -1.0, 1.0));
  const double k = (-dist + r1 + r2) * (dist + r1 - r2) * (dist - r1 + r2) *
                   (dist + r1 + r2);
  return r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * std::sqrt(std::max(k, 0.0));
}

struct SubTarget {
  Vec3 center;
  double radius = 0.0;
};

struct SubTargetPlan {
  std::vector<SubTarget> targets;
  double total_overlap_area = 0.0;  // sum of pairwise lens areas, final discs
  bool fallback_used = false;       // some disc exceeded the overlap bound
};

// Greedy randomized placement: discs are placed one at a time, centers drawn
// uniformly in the region, and a candidate is accepted when its lens overlap
// with every earlier disc stays below `overlap_tol` of the smaller disc's
// area. After `max_tries` rejected candidates the least-overlapping candidate
// seen is kept and the plan is flagged. Deterministic in `seed`.
inline SubTargetPlan plan_subtargets(const TaskCommand& task,
                                     std::span<const double> radii,
                                     std::uint64_t seed,
                                     double overlap_tol = 0.05,
                                     int max_tries = 100) {
  task.validate();
  if (radii.empty())
    throw std::invalid_argument("plan_subtargets: no radii given");
  for (double r : radii)
    if (r <= 0.0) throw std::domain_error("plan_subtargets: radius <= 0");
  if (max_tries < 1)
    throw std::invalid_argument("plan_subtargets: max_tries < 1");

  Rng rng(seed);
  SubTargetPlan plan;
  plan.targets.reserve(radii.size());
  const double x0 = task.center.x - 0.5 * task.length;
  const double y0 = task.center.y - 0.5 * task.width;

  for (double r : radii) {
    Vec3 best{};
    double best_total = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int attempt = 0; attempt < max_tries; ++attempt) {
      const Vec3 c{x0 + rng.uniform01() * task.length,
                   y0 + rng.uniform01() * task.width, task.center.z};
      double total = 0.0;
      bool ok = true;
      for (const auto& t : plan.targets) {
        const double ov =
            disc_overlap_area(horizontal_distance(c, t.center), r, t.radius);
        total += ov;
        const double rm = std::min(r, t.radius);
        if (ov > overlap_tol * std::numbers::pi * rm * rm) ok = false;
      }
      if (total < best_total) {
        best_total = total;
        best = c;
      }
      if (ok) {
        plan.targets.push_back({c, r});
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      plan.targets.push_back({best, r});
      plan.fallback_used = true;
    }
  }

  for (std::size_t i = 0; i < plan.targets.size(); ++i)
    for (std::size_t j = i + 1; j < plan.targets.size(); ++j)
      plan.total_overlap_area += disc_overlap_area(
          horizontal_distance(plan.targets[i].center, plan.targets[j].center),
          plan.targets[i].radius, plan.targets[j].radius);
  return plan;
}

// Fraction of the region area claimed by the selected AUVs' discs. Overlaps
// and overhang past the region edge are not subtracted, so values above 1
// are possible; callers clamp for reporting.
inline double coverage(std::span<const int> selection,
                       std::span<const double> radii,
                       const TaskCommand& task) {
  if (selection.size() != radii.size())
    throw std::invalid_argument("coverage: size mismatch");
  task.validate();
  double area = 0.0;
  for (std::size_t i = 0; i < selection.size(); ++i)
    if (selection[i] != 0)
      area += std::numbers::pi * radii[i] * radii[i];
  return area / (task.length * task.width);
}

// Physical constants of one AUV plus the survey cost model. Weight force is
// the net (buoyancy-trimmed) figure the depth and hover terms act against;
// a few newtons of residual heaviness keeps station-keeping cheap (~7 J per
// 2 s slice) next to the drag of actual swimming.
struct EnergyParams {
  double weight_force = 5.0;         // N
  double water_density = 1025.0;     // kg/m^3
  double cross_section = 0.1;        // m^2
  double drag_coefficient = 0.8;
  double scan_energy_density = 1.0;  // J per m^2 of surveyed disc
  double power_efficiency = 0.5;     // electrical-to-acoustic
  double data_density = 1000.0;      // sensed bits per m^2 of disc
  double scan_rate = std::numbers::pi / 5.0;  // rad/s of the scan sweep
  double sound_speed = 1500.0;                // m/s

  void validate() const {
    if (weight_force <= 0.0 || water_density <= 0.0 || cross_section <= 0.0)
      throw std::domain_error("EnergyParams: non-positive physical constant");
    if (drag_coefficient < 0.0)
      throw std::domain_error("EnergyParams: negative drag coefficient");
    if (scan_energy_density < 0.0 || data_density < 0.0)
      throw std::domain_error("EnergyParams: negative survey density");
    if (power_efficiency <= 0.0 || power_efficiency > 1.0)
      throw std::domain_error("EnergyParams: efficiency outside (0, 1]");
    if (scan_rate <= 0.0)
      throw std::domain_error("EnergyParams: scan rate must be positive");
    if (sound_speed <= 0.0)
      throw std::domain_error("EnergyParams: sound speed must be positive");
  }
};

constexpr double kInfiniteDelay = std::numeric_limits<double>::infinity();

// Command propagation plus transmission. A dead link (rate <= 0) yields an
// infinite delay rather than an error; the slot bookkeeping treats it as a
// failed task.
inline double dispatch_delay(double distance_m, double command_bits,
                             double rate_bps, const EnergyParams& ep) {
  if (distance_m <= 0.0)
    throw std::domain_error("dispatch_delay: distance must be positive");
  if (command_bits <= 0.0)
    throw std::domain_error("dispatch_delay: command size must be positive");
  if (rate_bps <= 0.0) return kInfiniteDelay;
  return distance_m / ep.sound_speed + command_bits / rate_bps;
}

// One full sweep of the scanning sonar.
inline double scan_delay(const EnergyParams& ep) {
  return 2.0 * std::numbers::pi / ep.scan_rate;
}

inline double collected_data_bits(double radius_m, const EnergyParams& ep) {
  if (radius_m <= 0.0)
    throw std::domain_error("collected_data_bits: radius must be positive");
  return ep.data_density * std::numbers::pi * radius_m * radius_m;
}

inline double upload_delay(double data_bits, double rate_bps,
                           double distance_m, const EnergyParams& ep) {
  if (data_bits <= 0.0)
    throw std::domain_error("upload_delay: data size must be positive");
  if (distance_m <= 0.0)
    throw std::domain_error("upload_delay: distance must be positive");
  if (rate_bps <= 0.0) return kInfiniteDelay;
  return data_bits / rate_bps + distance_m / ep.sound_speed;
}

// Per-AUV phase breakdown for one slot. An AUV that never reached its
// sub-target carries the full low-level horizon as movement time and zeros
// for the phases it never entered.
struct PhaseDelays {
  double dispatch = 0.0;
  double move = 0.0;
  double scan = 0.0;
  double upload = 0.0;

  double total() const { return dispatch + move + scan + upload; }
};

// Slot completion time: the slowest AUV's phase sum.
inline double task_delay(std::span<const PhaseDelays> delays) {
  if (delays.empty()) throw std::invalid_argument("task_delay: no AUVs");
  double worst = 0.0;
  for (const auto& d : delays) worst = std::max(worst, d.total());
  return worst;
}

struct MobilityEnergy {
  double horizontal = 0.0;
  double depth = 0.0;
  double drag = 0.0;

  double total() const { return horizontal + depth + drag; }
};

// Propulsion energy over one slice. The horizontal term is the induced-power
// approximation of a hovering thruster: it peaks at zero ground speed
// (weight_force * dt / sqrt(2)) and falls off as translation unloads it. The
// depth term pays for climbing against net weight; descent is free. Drag is
// quadratic in the relative flow, and the work is drag times distance
// through the water, hence the cube.
inline MobilityEnergy mobility_energy(const Vec3& ground_velocity,
                                      const Vec3& relative_velocity, double dt,
                                      const EnergyParams& ep) {
  if (dt <= 0.0)
    throw std::domain_error("mobility_energy: dt must be positive");
  ep.validate();
  const double g = ep.weight_force;
  const double a_rho = ep.cross_section * ep.water_density;
  const double h2 = ground_velocity.x * ground_velocity.x +
                    ground_velocity.y * ground_velocity.y;
  const double denom = std::sqrt(h2 + h2 * h2 + (g * g) / (a_rho * a_rho));
  MobilityEnergy e;
  e.horizontal = (g * g * dt / (std::numbers::sqrt2 * a_rho)) / denom;
  e.depth = g * std::max(ground_velocity.z, 0.0) * dt;
  const double vr = relative_velocity.norm();
  e.drag = 0.5 * ep.cross_section * ep.drag_coefficient * ep.water_density *
           dt * vr * vr * vr;
  return e;
}

inline double exploration_energy(double radius_m, const EnergyParams& ep) {
  if (radius_m <= 0.0)
    throw std::domain_error("exploration_energy: radius must be positive");
  return ep.scan_energy_density * std::numbers::pi * radius_m * radius_m;
}

// Electrical energy to push `data_bits` through the uplink at the given
// acoustic power. Dead link: infinite, same convention as the delays.
inline double upload_energy(double tx_power_w, double data_bits,
                            double rate_bps, const EnergyParams& ep) {
  if (tx_power_w < 0.0)
    throw std::domain_error("upload_energy: negative power");
  if (data_bits <= 0.0)
    throw std::domain_error("upload_energy: data size must be positive");
  if (rate_bps <= 0.0) return kInfiniteDelay;
  return tx_power_w / ep.power_efficiency * (data_bits / rate_bps);
}

// Energy ledger step; drains must be non-negative, the result may go below
// zero (the reward penalizes the deficit, the vehicle does not vanish).
inline double remaining_energy(double energy, double mobility, double survey,
                               double upload) {
  if (mobility < 0.0 || survey < 0.0 || upload < 0.0)
    throw std::domain_error("remaining_energy: negative drain");
  return energy - mobility - survey - upload;
}

// Coverage per unit completion time, the slot-level figure of merit.
inline double cooperation_efficiency(double coverage, double task_delay_s) {
  if (task_delay_s <= 0.0)
    throw std::domain_error("cooperation_efficiency: delay must be positive");
  return coverage / task_delay_s;
}

}  // namespace auvcov::mission
