#ifndef FOPCA_ERROR_HPP_
#define FOPCA_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace fopca {

enum class Errc {
  dimension,
  input,
  rank,
  numeric,
  singularity,
  pole,
  unsupported_regime,
  requires_synthetic,
  weak_instrument,
  singular_variance,
  degrees_of_freedom,
  range,
  sample_size,
  log_domain,
  empty_interior,
  config,
};

inline const char *errc_name(Errc code) {
  switch (code) {
    case Errc::dimension: return "dimension";
    case Errc::input: return "input";
    case Errc::rank: return "rank";
    case Errc::numeric: return "numeric";
    case Errc::singularity: return "singularity";
    case Errc::pole: return "pole";
    case Errc::unsupported_regime: return "unsupported-regime";
    case Errc::requires_synthetic: return "requires-synthetic";
    case Errc::weak_instrument: return "weak-instrument";
    case Errc::singular_variance: return "singular-variance";
    case Errc::degrees_of_freedom: return "degrees-of-freedom";
    case Errc::range: return "range";
    case Errc::sample_size: return "sample-size";
    case Errc::log_domain: return "log-domain";
    case Errc::empty_interior: return "empty-interior";
    case Errc::config: return "config";
  }
  return "unknown";
}

/// Every failure raised by the library. The code tells callers (and the CLI
/// exit-code mapping) which contract was violated.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string &what)
      : std::runtime_error(std::string(errc_name(code)) + " error: " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

  /// Errors caused by the caller's inputs rather than by numerics.
  bool is_validation() const noexcept {
    switch (code_) {
      case Errc::dimension:
      case Errc::input:
      case Errc::config:
      case Errc::requires_synthetic:
      case Errc::unsupported_regime:
      case Errc::degrees_of_freedom:
      case Errc::sample_size:
      case Errc::range:
      case Errc::empty_interior:
        return true;
      default:
        return false;
    }
  }

 private:
  Errc code_;
};

}  // namespace fopca

#endif  // FOPCA_ERROR_HPP_
