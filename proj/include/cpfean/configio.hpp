#pragma once

#include <string>

#include "cpfean/synthetic.hpp"
#include "cpfean/training.hpp"

namespace cpfean {

// JSON config files. Keys are exactly the struct field names; unknown keys
// are rejected, omitted keys keep their defaults.
TrainConfig load_train_config(const std::string& path);
SyntheticSpec load_synthetic_spec(const std::string& path);

} // namespace cpfean
