#pragma once

#include <string>

#include "cpfean/alignment.hpp"
#include "cpfean/eval.hpp"
#include "cpfean/gradsuite.hpp"
#include "cpfean/training.hpp"

namespace cpfean {

// JSON object with the six recall fields (r10 null in desk mode), rsum_kind,
// and rsum.
std::string metrics_to_text(const MetricsReport& rep);

// One JSON line: epoch, mean_loss, lr, the recalls, rsum.
std::string epoch_log_line(const EpochLog& log);

std::string alignment_to_text(const AlignmentReport& rep);

// One line per case plus a verdict line.
std::string gradsuite_to_text(const GradSuiteResult& suite);

} // namespace cpfean
