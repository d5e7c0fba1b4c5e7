#pragma once

#include <string>
#include <string_view>

#include "versavid/error.hpp"

namespace versavid {

enum class TaskKind { DarkEventInfer, MixVidQA, MCQA, Caption };

inline std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::DarkEventInfer: return "DarkEventInfer";
    case TaskKind::MixVidQA: return "MixVidQA";
    case TaskKind::MCQA: return "MCQA";
    case TaskKind::Caption: return "Caption";
  }
  return "?";
}

inline TaskKind task_kind_from_string(std::string_view s) {
  if (s == "DarkEventInfer") return TaskKind::DarkEventInfer;
  if (s == "MixVidQA") return TaskKind::MixVidQA;
  if (s == "MCQA") return TaskKind::MCQA;
  if (s == "Caption") return TaskKind::Caption;
  throw Error(ErrorCode::SchemaError, "unknown task kind '" + std::string(s) + "'");
}

}  // namespace versavid
