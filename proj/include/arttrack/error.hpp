#pragma once

#include <stdexcept>
#include <string>

namespace arttrack {

// Base for every recoverable failure raised by the library. The CLI maps these
// to exit code 2 (data error).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ARTTRACK_DEFINE_ERROR(Name)            \
  class Name : public Error {                  \
   public:                                     \
    explicit Name(const std::string& what)     \
        : Error(std::string(#Name ": ") + what) {} \
  }

ARTTRACK_DEFINE_ERROR(AngleNearPi);
ARTTRACK_DEFINE_ERROR(TooFewPoints);
ARTTRACK_DEFINE_ERROR(EmptyCloud);
ARTTRACK_DEFINE_ERROR(DegeneratePair);
ARTTRACK_DEFINE_ERROR(AmbiguousPeak);
ARTTRACK_DEFINE_ERROR(EmptyInput);
ARTTRACK_DEFINE_ERROR(UnknownPart);
ARTTRACK_DEFINE_ERROR(LabelMismatch);
ARTTRACK_DEFINE_ERROR(MissingCorrespondence);
ARTTRACK_DEFINE_ERROR(UnknownTemplate);
ARTTRACK_DEFINE_ERROR(ScriptGap);
ARTTRACK_DEFINE_ERROR(LengthMismatch);
ARTTRACK_DEFINE_ERROR(InvalidModel);
ARTTRACK_DEFINE_ERROR(ParseError);

#undef ARTTRACK_DEFINE_ERROR

}  // namespace arttrack
