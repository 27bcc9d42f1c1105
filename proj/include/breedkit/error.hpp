#pragma once

#include <stdexcept>
#include <string>

namespace breedkit {

// Base of every error raised by the library. `name()` is the stable
// machine-readable kind reported by the CLI.
class Error : public std::runtime_error {
  public:
    Error(std::string name, const std::string &what)
        : std::runtime_error(what), name_(std::move(name)) {}

    const std::string &name() const noexcept { return name_; }

  private:
    std::string name_;
};

#define BREEDKIT_DEFINE_ERROR(Kind)                                                                                    \
    class Kind : public Error {                                                                                        \
      public:                                                                                                          \
        explicit Kind(const std::string &what) : Error(#Kind, what) {}                                                 \
    };

BREEDKIT_DEFINE_ERROR(ParseError)
BREEDKIT_DEFINE_ERROR(EmptyInput)
BREEDKIT_DEFINE_ERROR(InvalidInput)
BREEDKIT_DEFINE_ERROR(EmptyPlot)
BREEDKIT_DEFINE_ERROR(GeometryMismatch)
BREEDKIT_DEFINE_ERROR(MissingBand)
BREEDKIT_DEFINE_ERROR(InvalidMask)
BREEDKIT_DEFINE_ERROR(EmptyDataset)
BREEDKIT_DEFINE_ERROR(SingularSystem)
BREEDKIT_DEFINE_ERROR(UndefinedR2)
BREEDKIT_DEFINE_ERROR(InvalidToken)
BREEDKIT_DEFINE_ERROR(NumericalError)
BREEDKIT_DEFINE_ERROR(InvalidRanking)
BREEDKIT_DEFINE_ERROR(InvalidTrialSet)
BREEDKIT_DEFINE_ERROR(UndefinedDeviation)
BREEDKIT_DEFINE_ERROR(InvalidBallot)
BREEDKIT_DEFINE_ERROR(UnknownField)
BREEDKIT_DEFINE_ERROR(IoError)

#undef BREEDKIT_DEFINE_ERROR

} // namespace breedkit
