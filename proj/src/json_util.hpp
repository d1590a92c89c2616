#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include "fgt/strategy.hpp"
#include "json.hpp"

namespace fgt::detail {

using json = nlohmann::json;

/// Throws ConfigError naming the first key of `j` not in `keys`.
void reject_unknown(const json& j, std::initializer_list<std::string_view> keys, const std::string& where);

json hyper_to_json(const Hyper& h);
/// Overwrites the fields of `h` present in `j`.
void update_hyper(const json& j, Hyper& h, const std::string& where);
/// Throws ConfigError unless every field is in range.
void validate_hyper(const Hyper& h, const std::string& where);

}  // namespace fgt::detail
