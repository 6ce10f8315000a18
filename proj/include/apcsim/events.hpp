#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "apcsim/world_model.hpp"

namespace apcsim {

/// Append-only record of everything that happened during a run. Written as
/// line-delimited JSON: {"seq":..,"t":..,"type":..,"payload":{..}} per line.
struct EventRecord {
  std::uint64_t seq = 0;
  double t = 0.0;
  std::string type;
  nlohmann::json payload;
};

class EventLog {
public:
  /// Records must be appended in nondecreasing simulated time.
  void append(double t, const std::string& type, nlohmann::json payload);
  const std::vector<EventRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }

  std::string to_jsonl() const;
  static EventLog from_jsonl(const std::string& text);

private:
  std::vector<EventRecord> records_;
};

struct ScoreBreakdown {
  int total = 0;
  int earned = 0;
  int drop_penalties = 0;
  int misplace_penalties = 0;
  std::vector<std::string> lines;  // human-readable rows
};

/// Recompute the run score from the event log alone. Completed operations
/// earn their clutter-tier base plus bonus; floor drops and final-location
/// mismatches are penalized per the config.
ScoreBreakdown score_from_log(const EventLog& log, const ScoreConfig& cfg);

}  // namespace apcsim
