#include "compile/tasks.hpp"

#include <stdexcept>
#include <string>

namespace compile {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Visit: return "visit";
    case TaskKind::Pickup: return "pickup";
    case TaskKind::Reach: return "reach";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "visit") return TaskKind::Visit;
  if (name == "pickup") return TaskKind::Pickup;
  if (name == "reach") return TaskKind::Reach;
  throw std::invalid_argument("unknown task kind '" + std::string(name) + "'");
}

}  // namespace compile
