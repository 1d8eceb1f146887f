#pragma once
// Artifact emission: metrics JSON, confusion CSV, table rows, SVG bar
// charts, and the explainability bundle.

#include "clonescope/mil.hpp"
#include "clonescope/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace clonescope {

nlohmann::json metrics_json(const MetricsReport& m);
nlohmann::json cross_validation_json(const CrossValidation& cv, MilMethod method);
nlohmann::json test_result_json(const TestResult& r);
nlohmann::json explain_json(const ExplainResult& r);

std::string confusion_csv(const MetricsReport& m, const std::vector<std::string>& clone_order);

// one mean +/- std row per metric, values x100; AUC column reads n/a
// when unavailable
std::string table_row(MilMethod method, const CrossValidation& cv);
std::string table_header();

std::string diagram_csv(const PersistenceDiagram& d);
std::string pbow_csv(const std::vector<PBoWVector>& vectors);

// grouped bar chart of per-clone PBoW profiles with CI whiskers
std::string pbow_profile_svg(const std::map<std::string, ClonePBoWProfile>& profiles);

// per-clone histograms of one cell property ("size", "roundness",
// "intensity" labelled "color intensity")
std::string property_histogram_svg(const std::vector<CellRecord>& cells, const std::string& property,
                                   int bins = 20);

} // namespace clonescope
