#pragma once

#include <string>

inline std::string fixture_path(const std::string& name) {
  return std::string(MTOPT_FIXTURE_DIR) + "/" + name;
}
