#pragma once

#include <filesystem>

#include <json.hpp>

#include "esswb/realization.hpp"

namespace esswb {

/// {"ell","d","state_dims":[n_0..n_{l-1}],"A":[...],"B":[...],"C":[...],"D":[...]}
/// where each of A/B/C/D is a list of l row-major nested arrays. Zero-row
/// matrices encode as [], zero-column matrices as a list of empty rows.
nlohmann::ordered_json to_json(const LinearRecurrence& rec);

/// Shapes of empty matrices are recovered from state_dims and d. Throws
/// ParseError for malformed documents and ShapeError for broken shape chains.
LinearRecurrence recurrence_from_json(const nlohmann::json& j);

LinearRecurrence read_recurrence(const std::filesystem::path& path);
void write_recurrence(const std::filesystem::path& path, const LinearRecurrence& rec);

nlohmann::ordered_json to_json(const RealizationCertificate& cert);

}  // namespace esswb
