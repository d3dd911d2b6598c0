#pragma once

#include "tsrca/series.hpp"

#include <string>
#include <vector>

namespace tsrca {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

/// CSV: UTF-8, comma-separated, header row of sensor names, numeric body.
/// With has_timestamp the first column is named `timestamp` and holds
/// integer time indices.
SeriesMatrix load_csv(const std::string& path, bool has_timestamp = false);
void save_csv(const SeriesMatrix& series, const std::string& path);

/// Labels: JSON array of {"onset": int, "duration": int, "sensors": [names]},
/// sensor names resolved against the series header.
std::vector<AnomalyEvent> load_labels_json(const std::string& path, const SeriesMatrix& series);
void save_labels_json(const std::vector<AnomalyEvent>& events, const SeriesMatrix& series,
                      const std::string& path);

}  // namespace tsrca
