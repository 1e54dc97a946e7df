#pragma once

#include <string>
#include <string_view>

namespace compile {

enum class TaskKind { Visit, Pickup, Reach };

struct TaskSpec {
  TaskKind kind = TaskKind::Visit;
  int object_type = 0;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);  // throws std::invalid_argument

}  // namespace compile
