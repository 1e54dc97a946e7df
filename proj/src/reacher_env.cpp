#include "compile/reacher_env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace compile::reacher {
namespace {

constexpr double kTwoPi = 2.0 * M_PI;
constexpr double kMaxStepAngle = kMaxAngularVelocity * kTimeStep;

double clip_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

const Target* ReacherState::current_target() const {
  if (done()) return nullptr;
  const int type = tasks[static_cast<std::size_t>(task_index)].object_type;
  for (const auto& t : targets)
    if (t.type == type) return &t;
  return nullptr;
}

std::array<double, 2> fingertip(double theta1, double theta2) {
  return {kLinkLength * std::cos(theta1) + kLinkLength * std::cos(theta1 + theta2),
          kLinkLength * std::sin(theta1) + kLinkLength * std::sin(theta1 + theta2)};
}

double wrap_angle(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w -= kTwoPi;
  return w;
}

double wrap_difference(double a) {
  double w = std::fmod(a + M_PI, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  return w - M_PI;
}

ReacherState make_state(double theta1, double theta2, std::vector<Target> targets,
                        std::vector<TaskSpec> tasks) {
  ReacherState s;
  s.theta1 = wrap_angle(theta1);
  s.theta2 = wrap_angle(theta2);
  s.targets = std::move(targets);
  s.tasks = std::move(tasks);
  return s;
}

ReacherState generate_instance(Rng& rng, int num_tasks) {
  if (num_tasks < 1 || num_tasks > 5) throw std::invalid_argument("num_tasks must be in [1, 5]");
  const int count = static_cast<int>(rng.uniform_int(num_tasks, kMaxTargets));

  std::vector<int> types(kNumTargetTypes);
  std::iota(types.begin(), types.end(), 0);
  for (int i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(i, kNumTargetTypes - 1));
    std::swap(types[static_cast<std::size_t>(i)], types[j]);
  }

  std::vector<Target> targets;
  for (int i = 0; i < count; ++i) {
    const double radius = rng.uniform(kMinTargetDistance, kMaxTargetDistance);
    const double angle = rng.uniform(0.0, kTwoPi);
    targets.push_back({types[static_cast<std::size_t>(i)], radius * std::cos(angle),
                       radius * std::sin(angle), true});
  }

  std::vector<int> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < num_tasks; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(i, count - 1));
    std::swap(order[static_cast<std::size_t>(i)], order[j]);
  }
  std::vector<TaskSpec> tasks;
  for (int i = 0; i < num_tasks; ++i)
    tasks.push_back({TaskKind::Reach, targets[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])].type});

  const double theta1 = rng.uniform(0.0, kTwoPi);
  const double theta2 = rng.uniform(0.0, kTwoPi);
  return make_state(theta1, theta2, std::move(targets), std::move(tasks));
}

ReacherState generate_instance(std::uint64_t seed, int num_tasks) {
  Rng rng(seed);
  return generate_instance(rng, num_tasks);
}

ReacherEvent apply(ReacherState& s, const Action& action) {
  s.theta1 = wrap_angle(s.theta1 + clip_unit(action[0]) * kMaxStepAngle);
  s.theta2 = wrap_angle(s.theta2 + clip_unit(action[1]) * kMaxStepAngle);
  ++s.step_count;

  ReacherEvent event;
  if (s.done()) return event;
  const int type = s.tasks[static_cast<std::size_t>(s.task_index)].object_type;
  for (auto& t : s.targets) {
    if (t.type != type || !t.visible) continue;
    const auto tip = fingertip(s.theta1, s.theta2);
    if (std::hypot(tip[0] - t.x, tip[1] - t.y) <= kTargetRadius) {
      t.visible = false;
      ++s.task_index;
      event = {true, type};
    }
    break;
  }
  return event;
}

ReacherStep step(const ReacherState& state, const Action& action) {
  ReacherStep out{state, {}};
  out.event = apply(out.state, action);
  return out;
}

std::vector<double> observe(const ReacherState& s) {
  std::vector<double> obs(kObservationSize, 0.0);
  for (const auto& t : s.targets) {
    const auto base = static_cast<std::size_t>(3 * t.type);
    obs[base] = t.visible ? 1.0 : 0.0;
    obs[base + 1] = t.x;
    obs[base + 2] = t.y;
  }
  obs[kObservationSize - 2] = s.theta1;
  obs[kObservationSize - 1] = s.theta2;
  return obs;
}

Action scripted_action(const ReacherState& s) {
  const Target* target = s.current_target();
  if (target == nullptr) return {0.0, 0.0};
  const auto tip = fingertip(s.theta1, s.theta2);
  const double tip_radius = std::hypot(tip[0], tip[1]);
  const double target_radius = std::hypot(target->x, target->y);

  double elbow = 0.0;
  if (std::abs(tip_radius - target_radius) > kRadiusDeadband) {
    // Elbow angle giving the target radius, on the branch the arm is on.
    const double half = std::acos(std::clamp(target_radius / (2.0 * kLinkLength), -1.0, 1.0));
    const double wanted = std::sin(s.theta2) >= 0.0 ? 2.0 * half : kTwoPi - 2.0 * half;
    elbow = clip_unit(wrap_difference(wanted - s.theta2) / kMaxStepAngle);
  }

  // The bearing of the fingertip moves by half of any elbow rotation.
  const double bearing_error = wrap_difference(std::atan2(target->y, target->x) - std::atan2(tip[1], tip[0])) -
                               0.5 * elbow * kMaxStepAngle;
  double shoulder = 0.0;
  if (std::abs(bearing_error) > kAngleDeadband) shoulder = clip_unit(bearing_error / kMaxStepAngle);
  return {shoulder, elbow};
}

std::optional<ReacherDemo> generate_demo(const ReacherState& initial) {
  ReacherState s = initial;
  ReacherDemo demo;
  while (!s.done()) {
    if (s.out_of_time()) return std::nullopt;
    const Action a = scripted_action(s);
    const ReacherEvent ev = apply(s, a);
    demo.actions.push_back(a);
    if (ev.reached && !s.done()) demo.boundaries.push_back(static_cast<int>(demo.actions.size()) + 1);
  }
  return demo;
}

ReacherEpisode generate_episode(std::uint64_t seed, int num_tasks, int max_retries) {
  Rng rng(seed);
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    ReacherState inst = generate_instance(rng, num_tasks);
    if (auto demo = generate_demo(inst)) return {std::move(inst), std::move(*demo)};
  }
  throw std::runtime_error("reacher episode: demo resampling exhausted for seed " + std::to_string(seed));
}

}  // namespace compile::reacher
