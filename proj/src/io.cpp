#include "explicable/io.hpp"

#include <fstream>
#include <sstream>

namespace explicable {

namespace {

const Json& field(const Json& j, const char* name, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
  auto it = j.find(name);
  if (it == j.end()) throw ParseError(where + ": missing field '" + name + "'");
  return *it;
}

template <typename T>
T get(const Json& j, const char* name, const std::string& where) {
  const Json& v = field(j, name, where);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(where + ": field '" + name + "' has the wrong type");
  }
}

void check_version(const Json& j, const std::string& where) {
  int v = get<int>(j, "version", where);
  if (v != kFormatVersion) {
    throw ParseError(where + ": unsupported version " + std::to_string(v) + " (this build reads version " +
                     std::to_string(kFormatVersion) + "; re-export the file with a matching tool)");
  }
}

Json cell_json(Cell c) { return Json::array({c.row, c.col}); }

Cell cell_from(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    throw ParseError(where + ": expected a [row, col] pair");
  }
  return {j[0].get<int>(), j[1].get<int>()};
}

Json cells_json(const std::set<Cell>& cells) {
  Json out = Json::array();
  for (Cell c : cells) out.push_back(cell_json(c));
  return out;
}

std::set<Cell> cells_from(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of cells");
  std::set<Cell> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.insert(cell_from(j[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Json room_set_json(RoomSet s) {
  Json out = Json::array();
  for (int id : s.ids()) out.push_back(id);
  return out;
}

RoomSet room_set_from(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of room ids");
  RoomSet s;
  for (const Json& v : j) {
    if (!v.is_number_integer() || v.get<int>() < 0 || v.get<int>() >= RoomSet::kMaxRooms) {
      throw ParseError(where + ": invalid room id");
    }
    s.insert(v.get<int>());
  }
  return s;
}

Json labels_json(const std::vector<Label>& labels) {
  Json out = Json::array();
  for (Label l : labels) out.push_back(std::string(to_string(l)));
  return out;
}

std::vector<Label> labels_from(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of labels");
  std::vector<Label> out;
  for (const Json& v : j) {
    try {
      out.push_back(label_from_string(v.get<std::string>()));
    } catch (const std::exception&) {
      throw ParseError(where + ": invalid label");
    }
  }
  return out;
}

template <typename F>
auto wrap(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ParseError(where + ": " + e.what());
  }
}

}  // namespace

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(what + ": malformed JSON (" + e.what() + ")");
  }
}

// ---------------------------------------------------------------------------
// Problems

Json to_json(const Problem& p) {
  Json rooms = Json::array();
  for (const Room& r : p.map.rooms) rooms.push_back({{"id", r.id}, {"cell", cell_json(r.cell)}});
  return {{"version", kFormatVersion},
          {"id", p.id},
          {"width", p.map.width},
          {"height", p.map.height},
          {"visible", cells_json(p.map.visible_obstacles)},
          {"hidden", cells_json(p.map.hidden_obstacles)},
          {"rooms", rooms},
          {"robot_start", cell_json(p.map.robot_start)},
          {"goal", room_set_json(p.goal)},
          {"alpha", p.alpha},
          {"notes", p.notes}};
}

Problem problem_from_json(const Json& j) {
  const std::string where = "problem";
  check_version(j, where);
  Problem p;
  p.id = get<std::string>(j, "id", where);
  const std::string at = "problem '" + p.id + "'";
  p.map.width = get<int>(j, "width", at);
  p.map.height = get<int>(j, "height", at);
  p.map.visible_obstacles = cells_from(field(j, "visible", at), at + ".visible");
  p.map.hidden_obstacles = cells_from(field(j, "hidden", at), at + ".hidden");
  const Json& rooms = field(j, "rooms", at);
  if (!rooms.is_array()) throw ParseError(at + ": field 'rooms' must be an array");
  for (std::size_t i = 0; i < rooms.size(); ++i) {
    const std::string rw = at + ".rooms[" + std::to_string(i) + "]";
    p.map.rooms.push_back({get<int>(rooms[i], "id", rw), cell_from(field(rooms[i], "cell", rw), rw + ".cell")});
  }
  p.map.robot_start = cell_from(field(j, "robot_start", at), at + ".robot_start");
  p.goal = j.contains("goal") ? room_set_from(j["goal"], at + ".goal")
                              : RoomSet::all(p.map.room_count());
  p.alpha = get<double>(j, "alpha", at);
  p.notes = j.contains("notes") ? get<std::string>(j, "notes", at) : std::string();
  try {
    p.validate();
  } catch (const InvalidMap& e) {
    throw ParseError(at + ": " + e.what());
  }
  return p;
}

Json to_json(const ProblemSet& s) {
  Json problems = Json::array();
  for (const Problem& p : s.problems) problems.push_back(to_json(p));
  return {{"version", kFormatVersion}, {"split", std::string(to_string(s.split))}, {"problems", problems}};
}

ProblemSet problem_set_from_json(const Json& j) {
  const std::string where = "problem set";
  check_version(j, where);
  ProblemSet s;
  s.split = wrap(where, [&] { return split_from_string(get<std::string>(j, "split", where)); });
  const Json& problems = field(j, "problems", where);
  if (!problems.is_array()) throw ParseError(where + ": field 'problems' must be an array");
  std::set<std::string> ids;
  for (const Json& pj : problems) {
    s.problems.push_back(problem_from_json(pj));
    if (!ids.insert(s.problems.back().id).second) {
      throw ParseError(where + ": duplicate problem id '" + s.problems.back().id + "'");
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Models

Json to_json(const LabelerModel& m) {
  const TrainingStats& st = m.stats();
  return {{"version", kFormatVersion},
          {"feature_index", m.feature_index().names()},
          {"weights", m.weights()},
          {"l2_sigma", m.l2_sigma()},
          {"metadata",
           {{"iterations", st.iterations},
            {"final_objective", st.final_objective},
            {"gradient_norm", st.gradient_norm},
            {"converged", st.converged},
            {"sequences", st.sequences},
            {"tokens", st.tokens},
            {"warnings", st.warnings}}}};
}

LabelerModel model_from_json(const Json& j) {
  const std::string where = "model";
  check_version(j, where);
  auto names = get<std::vector<std::string>>(j, "feature_index", where);
  FeatureIndex index = wrap(where, [&] { return FeatureIndex(names); });
  LabelerModel m(std::move(index), get<double>(j, "l2_sigma", where));
  auto weights = get<std::vector<double>>(j, "weights", where);
  if (weights.size() != m.weights().size()) {
    throw ParseError(where + ": expected " + std::to_string(m.weights().size()) + " weights, found " +
                     std::to_string(weights.size()));
  }
  m.weights() = std::move(weights);
  const Json& meta = field(j, "metadata", where);
  const std::string mw = where + ".metadata";
  TrainingStats& st = m.stats();
  st.iterations = get<int>(meta, "iterations", mw);
  st.final_objective = get<double>(meta, "final_objective", mw);
  st.gradient_norm = get<double>(meta, "gradient_norm", mw);
  st.converged = get<bool>(meta, "converged", mw);
  st.sequences = get<int>(meta, "sequences", mw);
  st.tokens = get<int>(meta, "tokens", mw);
  st.warnings = get<std::vector<std::string>>(meta, "warnings", mw);
  return m;
}

// ---------------------------------------------------------------------------
// States, actions, plans

Json to_json(const TeamState& s) {
  return {{"tick", s.tick},
          {"robot_pos", cell_json(s.robot_pos)},
          {"visited", room_set_json(s.visited)},
          {"current_command", s.current_command ? Json(*s.current_command) : Json(nullptr)}};
}

TeamState team_state_from_json(const Json& j, const std::string& where) {
  TeamState s;
  s.tick = get<int>(j, "tick", where);
  s.robot_pos = cell_from(field(j, "robot_pos", where), where + ".robot_pos");
  s.visited = room_set_from(field(j, "visited", where), where + ".visited");
  const Json& cmd = field(j, "current_command", where);
  if (!cmd.is_null()) s.current_command = get<int>(j, "current_command", where);
  return s;
}

Json to_json(const Action& a) {
  if (a.is_command()) return {{"type", "command"}, {"room", a.room}};
  return {{"type", "move"}, {"dir", std::string(to_string(a.dir))}};
}

Action action_from_json(const Json& j, const std::string& where) {
  auto type = get<std::string>(j, "type", where);
  if (type == "command") return Action::command(get<int>(j, "room", where));
  if (type == "move") {
    return wrap(where, [&] { return Action::move(direction_from_string(get<std::string>(j, "dir", where))); });
  }
  throw ParseError(where + ": unknown action type '" + type + "'");
}

Json to_json(const CompositePlan& p) {
  Json out = Json::array();
  for (const Action& a : p.actions) out.push_back(to_json(a));
  return out;
}

CompositePlan plan_from_json(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of actions");
  CompositePlan p;
  for (std::size_t i = 0; i < j.size(); ++i) {
    p.actions.push_back(action_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Traces

std::string trace_to_jsonl(const Trace& t) {
  Json replans = Json::array();
  for (const ReplanEvent& r : t.replans) {
    replans.push_back({{"tick", r.tick}, {"observed_room", r.observed_room}, {"plan_length", r.plan_length}});
  }
  Json header = {{"kind", "trace"},
                 {"version", kFormatVersion},
                 {"trace_id", t.trace_id},
                 {"problem_ref", t.problem_ref},
                 {"source", std::string(to_string(t.source))},
                 {"outcome", std::string(to_string(t.outcome))},
                 {"events", t.events.size()},
                 {"replans", replans}};
  std::string out = header.dump() + "\n";
  for (const TraceEvent& e : t.events) {
    Json line = {{"tick", e.tick},
                 {"agent", std::string(to_string(e.agent))},
                 {"action", to_json(e.action)},
                 {"label", e.label ? Json(std::string(to_string(*e.label))) : Json(nullptr)},
                 {"state_after", to_json(e.state_after)}};
    out += line.dump() + "\n";
  }
  return out;
}

std::vector<Trace> traces_from_jsonl(const std::string& text) {
  std::vector<Trace> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::size_t pending = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "trace line " + std::to_string(line_no);
    Json j = parse_json(line, where);
    if (pending == 0) {
      if (get<std::string>(j, "kind", where) != "trace") throw ParseError(where + ": expected a trace header");
      check_version(j, where);
      Trace t;
      t.trace_id = get<std::string>(j, "trace_id", where);
      t.problem_ref = get<std::string>(j, "problem_ref", where);
      auto source = get<std::string>(j, "source", where);
      if (source == "HUMAN_LIVE") {
        t.source = TraceSource::HumanLive;
      } else if (source == "SIMULATED") {
        t.source = TraceSource::Simulated;
      } else {
        throw ParseError(where + ": unknown source '" + source + "'");
      }
      auto outcome = get<std::string>(j, "outcome", where);
      if (outcome == "COMPLETED") {
        t.outcome = Outcome::Completed;
      } else if (outcome == "ABORTED") {
        t.outcome = Outcome::Aborted;
      } else {
        throw ParseError(where + ": unknown outcome '" + outcome + "'");
      }
      for (const Json& r : field(j, "replans", where)) {
        t.replans.push_back({get<int>(r, "tick", where), get<int>(r, "observed_room", where),
                             get<std::size_t>(r, "plan_length", where)});
      }
      pending = get<std::size_t>(j, "events", where);
      out.push_back(std::move(t));
      continue;
    }
    TraceEvent e;
    e.tick = get<int>(j, "tick", where);
    auto agent = get<std::string>(j, "agent", where);
    if (agent != "HUMAN" && agent != "ROBOT") throw ParseError(where + ": unknown agent '" + agent + "'");
    e.agent = agent == "HUMAN" ? Agent::Human : Agent::Robot;
    e.action = action_from_json(field(j, "action", where), where + ".action");
    const Json& label = field(j, "label", where);
    if (!label.is_null()) {
      e.label = wrap(where, [&] { return label_from_string(get<std::string>(j, "label", where)); });
    }
    e.state_after = team_state_from_json(field(j, "state_after", where), where + ".state_after");
    out.back().events.push_back(std::move(e));
    --pending;
  }
  if (pending != 0) {
    throw ParseError("trace '" + out.back().trace_id + "' truncated: missing field 'events' entries (" +
                     std::to_string(pending) + " expected lines absent)");
  }
  return out;
}

std::string corpus_to_jsonl(const std::vector<JudgedSequence>& corpus) {
  std::string out;
  for (const JudgedSequence& seq : corpus) {
    Json feats = Json::array();
    for (const FeatureVector& fv : seq.features) {
      Json entries = Json::array();
      for (auto [f, v] : fv.entries) entries.push_back(Json::array({f, v}));
      feats.push_back(entries);
    }
    out += Json{{"features", feats}, {"labels", labels_json(seq.labels)}}.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

Json to_json(const EvalReport& r) {
  Json rows = Json::array();
  for (const EvalRow& row : r.rows) {
    rows.push_back({{"plan_type", std::string(to_string(row.type))},
                    {"ratio", row.ratio},
                    {"explicable", row.explicable},
                    {"total", row.total}});
  }
  Json per = Json::array();
  for (const std::string& id : r.scenarios) {
    Json entry = {{"problem_id", id}};
    for (PlanType t : {PlanType::Explicable, PlanType::Baseline, PlanType::Human}) {
      if (auto s = r.scenario_score(id, t)) entry[std::string(to_string(t))] = *s;
    }
    per.push_back(entry);
  }
  Json plans = Json::array();
  for (const ScoredPlan& p : r.plans) {
    plans.push_back({{"problem_id", p.problem_id},
                     {"plan_type", std::string(to_string(p.type))},
                     {"plan", to_json(p.plan)},
                     {"labels", labels_json(p.labels)}});
  }
  return {{"version", kFormatVersion},
          {"rows", rows},
          {"scenarios", r.scenarios},
          {"per_scenario", per},
          {"plans", plans}};
}

EvalReport report_from_json(const Json& j) {
  const std::string where = "report";
  check_version(j, where);
  EvalReport r;
  for (const Json& row : field(j, "rows", where)) {
    r.rows.push_back({wrap(where, [&] { return plan_type_from_string(get<std::string>(row, "plan_type", where)); }),
                      get<double>(row, "ratio", where), get<int>(row, "explicable", where),
                      get<int>(row, "total", where)});
  }
  r.scenarios = get<std::vector<std::string>>(j, "scenarios", where);
  for (const Json& p : field(j, "plans", where)) {
    ScoredPlan sp;
    sp.problem_id = get<std::string>(p, "problem_id", where);
    sp.type = wrap(where, [&] { return plan_type_from_string(get<std::string>(p, "plan_type", where)); });
    sp.plan = plan_from_json(field(p, "plan", where), where + ".plan");
    sp.labels = labels_from(field(p, "labels", where), where + ".labels");
    r.plans.push_back(std::move(sp));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Files

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

Problem load_problem(const std::filesystem::path& path) {
  return problem_from_json(parse_json(read_file(path), path.string()));
}

void save_problem(const std::filesystem::path& path, const Problem& p) {
  write_file(path, to_json(p).dump(2) + "\n");
}

ProblemSet load_problem_set(const std::filesystem::path& path) {
  Json j = parse_json(read_file(path), path.string());
  if (j.is_object() && j.contains("problems")) return problem_set_from_json(j);
  ProblemSet s;
  s.split = Split::Test;
  s.problems.push_back(problem_from_json(j));
  return s;
}

void save_problem_set(const std::filesystem::path& path, const ProblemSet& s) {
  write_file(path, to_json(s).dump(2) + "\n");
}

LabelerModel load_model(const std::filesystem::path& path) {
  return model_from_json(parse_json(read_file(path), path.string()));
}

void save_model(const std::filesystem::path& path, const LabelerModel& m) {
  write_file(path, to_json(m).dump(2) + "\n");
}

std::vector<Trace> load_traces(const std::filesystem::path& path) {
  return traces_from_jsonl(read_file(path));
}

void save_trace(const std::filesystem::path& path, const Trace& t) {
  write_file(path, trace_to_jsonl(t));
}

void save_report(const std::filesystem::path& path, const EvalReport& r) {
  write_file(path, to_json(r).dump(2) + "\n");
}

EvalReport load_report(const std::filesystem::path& path) {
  return report_from_json(parse_json(read_file(path), path.string()));
}

}  // namespace explicable
