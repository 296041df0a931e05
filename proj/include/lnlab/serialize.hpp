#pragma once

// JSON conversions for configuration and result types. Parsing is strict:
// unknown keys and wrongly typed values raise ConfigError.

#include "json.hpp"
#include "lnlab/corpus.hpp"
#include "lnlab/model.hpp"
#include "lnlab/noise.hpp"
#include "lnlab/tapt.hpp"
#include "lnlab/train.hpp"

namespace lnlab {

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

void to_json(nlohmann::json& j, const NoiseSpec& s);
void from_json(const nlohmann::json& j, NoiseSpec& s);

void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

void to_json(nlohmann::json& j, const TaptConfig& c);
void from_json(const nlohmann::json& j, TaptConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const EpochRecord& r);
void to_json(nlohmann::json& j, const TrainResult& r);

nlohmann::json matrix_to_json(const TransitionMatrix& m);
TransitionMatrix matrix_from_json(const nlohmann::json& j);

/// Raises ConfigError naming the first key of `j` not in `allowed`.
void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                        std::string_view context);

/// Parses `text` as JSON, mapping parse failures to ConfigError.
nlohmann::json parse_json_config(std::string_view text, std::string_view context);

}  // namespace lnlab
