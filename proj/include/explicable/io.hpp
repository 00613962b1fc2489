#pragma once

// Versioned JSON formats for problems, problem sets, models, traces
// (JSON Lines), training corpora and evaluation reports.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "explicable/datakit.hpp"
#include "explicable/episode.hpp"
#include "explicable/gridworld.hpp"
#include "explicable/labeler.hpp"

namespace explicable {

inline constexpr int kFormatVersion = 1;

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Json = nlohmann::ordered_json;

Json to_json(const Problem& p);
Problem problem_from_json(const Json& j);

Json to_json(const ProblemSet& s);
ProblemSet problem_set_from_json(const Json& j);

Json to_json(const LabelerModel& m);
LabelerModel model_from_json(const Json& j);

Json to_json(const TeamState& s);
TeamState team_state_from_json(const Json& j, const std::string& where = "state");

Json to_json(const Action& a);
Action action_from_json(const Json& j, const std::string& where = "action");

Json to_json(const CompositePlan& p);
CompositePlan plan_from_json(const Json& j, const std::string& where = "plan");

Json to_json(const EvalReport& r);
EvalReport report_from_json(const Json& j);

/// One header line followed by one line per event.
std::string trace_to_jsonl(const Trace& t);
/// Parses one or more concatenated traces. Errors name the line number.
std::vector<Trace> traces_from_jsonl(const std::string& text);

std::string corpus_to_jsonl(const std::vector<JudgedSequence>& corpus);

/// Parses `text` as JSON, wrapping syntax errors in ParseError.
Json parse_json(const std::string& text, const std::string& what);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

Problem load_problem(const std::filesystem::path& path);
void save_problem(const std::filesystem::path& path, const Problem& p);
/// Accepts either a problem-set document or a single problem.
ProblemSet load_problem_set(const std::filesystem::path& path);
void save_problem_set(const std::filesystem::path& path, const ProblemSet& s);
LabelerModel load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const LabelerModel& m);
std::vector<Trace> load_traces(const std::filesystem::path& path);
void save_trace(const std::filesystem::path& path, const Trace& t);
void save_report(const std::filesystem::path& path, const EvalReport& r);
EvalReport load_report(const std::filesystem::path& path);

}  // namespace explicable
