#pragma once

#include <stdexcept>
#include <string>

namespace cag {

/// Base class for every error the toolkit raises. Catchable as one family
/// so batch drivers can map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define CAG_ERROR_TYPE(Name)                                        \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

// Trace format
CAG_ERROR_TYPE(MalformedTrace);
CAG_ERROR_TYPE(UnknownLabelToken);

// Backends
CAG_ERROR_TYPE(BackendUnavailable);
CAG_ERROR_TYPE(AuthFailure);
CAG_ERROR_TYPE(Timeout);
CAG_ERROR_TYPE(CassetteMiss);
CAG_ERROR_TYPE(IoFailure);

// Calibration / decision theory
CAG_ERROR_TYPE(NonpositiveUtility);
CAG_ERROR_TYPE(DegenerateLabels);
CAG_ERROR_TYPE(UnlabeledStep);

// Metrics
CAG_ERROR_TYPE(NoClaims);
CAG_ERROR_TYPE(NonpositiveK);
CAG_ERROR_TYPE(EmptyDomain);
CAG_ERROR_TYPE(AllZero);
CAG_ERROR_TYPE(MissingDecodeStats);

// Rewards
CAG_ERROR_TYPE(GroupTooSmall);
CAG_ERROR_TYPE(NonpositiveRatio);
CAG_ERROR_TYPE(LengthMismatch);
CAG_ERROR_TYPE(NotNormalized);
CAG_ERROR_TYPE(SupportMismatch);

// Curation
CAG_ERROR_TYPE(UnparseableJudgment);
CAG_ERROR_TYPE(MissingRevisedAnswerTags);
CAG_ERROR_TYPE(InvalidTuple);

#undef CAG_ERROR_TYPE

}  // namespace cag
