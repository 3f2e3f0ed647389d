#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "knudsen/config.hpp"
#include "knudsen/flight.hpp"
#include "knudsen/spectral.hpp"

namespace knudsen {

inline constexpr const char* kVersion = "0.3.0";

// Shortest text that parses back to the same double; NaN prints as empty.
std::string format_number(double x);

// {command, config_hash, seed, version, eigen, compiler}
nlohmann::json provenance(const ExperimentConfig& cfg, const std::string& command);

nlohmann::json spectral_json(const SpectralResult& r);

void write_simulate_csv(std::ostream& out, const DiffusivityResult& r);
nlohmann::json simulate_json(const DiffusivityResult& r);

void write_exit_csv(std::ostream& out, const std::string& label, const std::vector<ExitTimeResult>& runs);
nlohmann::json exit_json(const std::string& label, const std::vector<ExitTimeResult>& runs,
                         const std::optional<ExitFit>& fit, std::optional<double> D_reference);

void write_correlation_csv(std::ostream& out, const CorrelationProfile& p);
nlohmann::json correlation_json(const CorrelationProfile& p);

void write_clt_csv(std::ostream& out, const std::string& label, const CltReport& r);
nlohmann::json clt_json(const CltReport& r);

// Creates parent directories; the JSON is written with a trailing newline.
void write_json_file(const std::string& path, const nlohmann::json& j);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace knudsen
