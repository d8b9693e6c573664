#ifndef PROMO_ERRORS_HPP_
#define PROMO_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace promo {

// A feature index outside the model's vocabulary.  There is deliberately no
// hashing fallback: an unknown user must be visible to the caller.
class vocab_error : public std::runtime_error {
 public:
  explicit vocab_error(const std::string& what) : std::runtime_error(what) {}
};

// The requested budget cannot be met by any assignment.  Carries the minimum
// achievable spend so the caller can report how far off the budget is.
class infeasible_error : public std::runtime_error {
 public:
  infeasible_error(const std::string& what, double min_spend)
      : std::runtime_error(what), min_spend_(min_spend) {}
  double min_spend() const { return min_spend_; }

 private:
  double min_spend_ = 0.0;
};

// Two artifacts that must belong together do not (stale dual variables,
// model/grid mismatch, malformed or wrong-version files).
class incompat_error : public std::runtime_error {
 public:
  explicit incompat_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace promo

#endif  // PROMO_ERRORS_HPP_
