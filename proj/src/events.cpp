#include "apcsim/events.hpp"

#include <sstream>

#include "apcsim/json_util.hpp"

namespace apcsim {

void EventLog::append(double t, const std::string& type, nlohmann::json payload) {
  if (!records_.empty() && t < records_.back().t - 1e-9)
    throw ValidationError("event log: time went backwards at " + type);
  EventRecord r;
  r.seq = records_.size() + 1;
  r.t = t;
  r.type = type;
  r.payload = std::move(payload);
  records_.push_back(std::move(r));
}

std::string EventLog::to_jsonl() const {
  std::ostringstream out;
  for (const auto& r : records_) {
    Json line{{"seq", r.seq}, {"t", r.t}, {"type", r.type}, {"payload", r.payload}};
    out << line.dump() << "\n";
  }
  return out.str();
}

EventLog EventLog::from_jsonl(const std::string& text) {
  EventLog log;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j = parse_json(line, "trace line " + std::to_string(lineno));
    EventRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.t = j.at("t").get<double>();
    r.type = j.at("type").get<std::string>();
    r.payload = j.value("payload", Json::object());
    log.records_.push_back(std::move(r));
  }
  return log;
}

ScoreBreakdown score_from_log(const EventLog& log, const ScoreConfig& cfg) {
  ScoreBreakdown b;
  char buf[160];
  for (const auto& r : log.records()) {
    if (r.type == "op_complete") {
      std::string kind = r.payload.value("kind", "pick");
      if (kind == "move") continue;
      std::string item = r.payload.value("item", "");
      int clutter = r.payload.value("clutter_at_plan", 0);
      int pts = cfg.base_points(clutter) + cfg.item_bonus(item);
      b.earned += pts;
      std::snprintf(buf, sizeof(buf), "%-36s %-5s clutter=%d  +%d", item.c_str(), kind.c_str(), clutter, pts);
      b.lines.push_back(buf);
    } else if (r.type == "drop") {
      if (r.payload.value("location", "") == kFloorLocation) {
        b.drop_penalties += cfg.penalty_drop;
        std::snprintf(buf, sizeof(buf), "%-36s dropped on the floor  -%d", r.payload.value("item", "").c_str(),
                      cfg.penalty_drop);
        b.lines.push_back(buf);
      }
    } else if (r.type == "misplace") {
      b.misplace_penalties += cfg.penalty_misplace;
      std::snprintf(buf, sizeof(buf), "%-36s misplaced (%s reported, %s actual)  -%d",
                    r.payload.value("item", "").c_str(), r.payload.value("reported", "").c_str(),
                    r.payload.value("actual", "").c_str(), cfg.penalty_misplace);
      b.lines.push_back(buf);
    }
  }
  b.total = b.earned - b.drop_penalties - b.misplace_penalties;
  return b;
}

}  // namespace apcsim
