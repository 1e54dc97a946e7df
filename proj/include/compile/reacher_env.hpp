#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "compile/rng.hpp"
#include "compile/tasks.hpp"

namespace compile::reacher {

inline constexpr double kLinkLength = 0.12;
inline constexpr double kMaxAngularVelocity = 5.0;  // rad/s at command 1
inline constexpr double kTimeStep = 0.06;
inline constexpr double kTargetRadius = 0.025;  // half the target diameter
inline constexpr double kMinTargetDistance = 0.05;
inline constexpr double kMaxTargetDistance = 0.2;
inline constexpr int kMaxSteps = 100;
inline constexpr int kNumTargetTypes = 10;
inline constexpr int kMaxTargets = 6;
inline constexpr int kObservationSize = 3 * kNumTargetTypes + 2;

// Controller dead-bands.
inline constexpr double kRadiusDeadband = 0.005;
inline constexpr double kAngleDeadband = 0.05;

struct Target {
  int type = 0;
  double x = 0.0;
  double y = 0.0;
  bool visible = true;
  friend bool operator==(const Target&, const Target&) = default;
};

// Commanded angular velocities (shoulder, elbow), each clipped to [-1, 1].
using Action = std::array<double, 2>;

struct ReacherState {
  double theta1 = 0.0;
  double theta2 = 0.0;
  std::vector<Target> targets;
  std::vector<TaskSpec> tasks;
  int task_index = 0;
  int step_count = 0;

  bool done() const { return task_index >= static_cast<int>(tasks.size()); }
  bool out_of_time() const { return step_count >= kMaxSteps; }
  const Target* current_target() const;
};

struct ReacherEvent {
  bool reached = false;
  int object_type = -1;
  friend bool operator==(const ReacherEvent&, const ReacherEvent&) = default;
};

struct ReacherStep {
  ReacherState state;
  ReacherEvent event;
};

std::array<double, 2> fingertip(double theta1, double theta2);
double wrap_angle(double a);         // into [0, 2*pi)
double wrap_difference(double a);    // into (-pi, pi]

ReacherState make_state(double theta1, double theta2, std::vector<Target> targets,
                        std::vector<TaskSpec> tasks);

ReacherState generate_instance(std::uint64_t seed, int num_tasks);
ReacherState generate_instance(Rng& rng, int num_tasks);

ReacherStep step(const ReacherState& state, const Action& action);
ReacherEvent apply(ReacherState& state, const Action& action);

std::vector<double> observe(const ReacherState& state);

// Saturated proportional controller: the elbow drives the fingertip radius to
// the target distance, the shoulder drives the fingertip bearing to the target
// bearing (compensating the bearing shift caused by the elbow command).
Action scripted_action(const ReacherState& state);

struct ReacherDemo {
  std::vector<Action> actions;
  std::vector<int> boundaries;
};

// Empty (resample) when the controller does not finish within kMaxSteps.
std::optional<ReacherDemo> generate_demo(const ReacherState& state);

struct ReacherEpisode {
  ReacherState initial;
  ReacherDemo demo;
};

ReacherEpisode generate_episode(std::uint64_t seed, int num_tasks, int max_retries = 100);

}  // namespace compile::reacher
