#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "knudsen/parallel.hpp"

namespace knudsen {

// quick: < 1 min, smoke coverage of every suite at small sizes.
// standard: < 15 min, 10^6-sample stationarity for every shipped 2D kernel,
//   10^7-sample moments, grid 1024 matrix invariants, grid 2048 spectral eta
//   against MC for ms, semicircle, flat-top and flat-bottom.
// full: < 2 h, 10^6 geometry points, 4*10^6-sample stationarity plus a
//   chi-square variant, 10^8-sample moments, grid 2048 matrix invariants.
enum class Profile { Quick, Standard, Full };

std::string to_string(Profile p);
Profile profile_from_string(const std::string& s);

enum class CheckStatus { Pass, Fail, Skip };

struct CheckResult {
  std::string suite;
  std::string name;
  CheckStatus status = CheckStatus::Pass;
  std::string message;
  double seconds = 0.0;
};

struct ValidationReport {
  Profile profile = Profile::Quick;
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  int count(CheckStatus s) const;
  bool passed() const { return count(CheckStatus::Fail) == 0; }
};

using CheckCallback = std::function<void(const CheckResult&)>;

ValidationReport run_validation(Profile profile, std::uint64_t seed, const Execution& exec = {},
                                const CheckCallback& on_check = {});

void write_junit(std::ostream& out, const ValidationReport& r);
std::string human_summary(const ValidationReport& r);

}  // namespace knudsen
