#include <cstdlib>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "apcsim/json_util.hpp"
#include "apcsim/scenario.hpp"

namespace {

using namespace apcsim;

std::string default_cache_dir() {
  const char* env = std::getenv("APCSIM_CACHE_DIR");
  if (env && *env) return env;
  return ".apcsim_cache";
}

int cmd_run(const std::string& task_file, const std::string& config_file, std::uint64_t seed,
            const std::string& trace_file, const std::string& result_file, const std::string& mode,
            bool rebuild_cache) {
  Scenario scenario = Scenario::load(config_file);
  WorkOrder order = load_work_order_file(task_file, scenario.cell, scenario.catalog);
  if (!mode.empty() && mode != order.mode) {
    std::cerr << "error: --mode " << mode << " does not match the task file (" << order.mode << ")\n";
    return 2;
  }
  OfflineLibrary library = scenario.offline_library(seed, default_cache_dir(), rebuild_cache);
  RunOutput out = run_task(scenario.context(library), order, seed);

  if (!trace_file.empty()) write_file(trace_file, out.log.to_jsonl());
  if (!result_file.empty()) write_file(result_file, out.result_file.dump(2) + "\n");
  std::cout << out.report_text();
  return 0;
}

int cmd_score(const std::string& trace_file, const std::string& config_file) {
  Scenario scenario = Scenario::load(config_file);
  EventLog log = EventLog::from_jsonl(read_file(trace_file));
  ScoreBreakdown b = score_from_log(log, scenario.score);
  for (const auto& line : b.lines) std::cout << line << "\n";
  std::cout << "earned " << b.earned << ", drop penalties " << b.drop_penalties << ", misplace penalties "
            << b.misplace_penalties << "\n";
  std::cout << "total: " << b.total << "\n";
  return 0;
}

int cmd_replay(const std::string& trace_file, const std::string& config_file) {
  Scenario scenario = Scenario::load(config_file);
  EventLog log = EventLog::from_jsonl(read_file(trace_file));
  if (log.empty()) {
    std::cerr << "replay: empty trace\n";
    return 3;
  }
  const EventRecord& header = log.records().front();
  if (header.type != "run_header") {
    std::cerr << "replay: trace does not start with run_header\n";
    return 3;
  }
  WorkOrder order =
      load_work_order(header.payload.at("task").dump(), scenario.cell, scenario.catalog);
  std::uint64_t seed = header.payload.at("seed").get<std::uint64_t>();
  WorldState world = make_initial_world(order, scenario.cell, scenario.catalog, seed);

  std::map<std::string, std::string> locations;
  for (const auto& [id, st] : world.items) locations[id] = st.location;

  const nlohmann::json* recorded_result = nullptr;
  for (const auto& r : log.records()) {
    if (r.type == "attach") {
      locations[r.payload.at("item").get<std::string>()] = kGripperLocation;
    } else if (r.type == "place" || r.type == "drop") {
      locations[r.payload.at("item").get<std::string>()] = r.payload.at("location").get<std::string>();
    } else if (r.type == "run_end") {
      recorded_result = &r.payload.at("result");
    }
  }
  if (!recorded_result) {
    std::cerr << "replay: trace has no run_end record (truncated?)\n";
    return 3;
  }

  // replayed ground truth must match the recorded result for every item the
  // run tracked correctly; items the run itself misreported are flagged in
  // misplace records and excluded from the strict comparison
  std::set<std::string> misplaced;
  for (const auto& r : log.records())
    if (r.type == "misplace") misplaced.insert(r.payload.at("item").get<std::string>());

  auto find_reported = [&](const std::string& id) -> std::string {
    const nlohmann::json& res = *recorded_result;
    for (const auto& [bin, items] : res.at("bin_contents").items())
      for (const auto& it : items)
        if (it.get<std::string>() == id) return bin;
    for (const auto& it : res.at("tote_contents"))
      if (it.get<std::string>() == id) return kToteLocation;
    if (res.contains("floor"))
      for (const auto& it : res.at("floor"))
        if (it.get<std::string>() == id) return kFloorLocation;
    return "?";
  };

  for (const auto& [id, loc] : locations) {
    if (misplaced.count(id)) continue;
    std::string reported = find_reported(id);
    std::string actual = loc == kStagedLocation || loc == kGripperLocation ? kFloorLocation : loc;
    if (reported != actual) {
      std::cerr << "replay divergence: " << id << " replayed at " << actual << " but recorded at " << reported
                << "\n";
      return 3;
    }
  }
  std::cout << "replay ok: " << locations.size() << " items verified\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic APC 2016 pick-and-stow simulator"};
  app.require_subcommand(1);

  std::string task_file, config_file, trace_file, result_file, mode;
  std::uint64_t seed = 0;
  bool rebuild_cache = false;

  CLI::App* run = app.add_subcommand("run", "Run a scenario");
  run->add_option("--task", task_file, "Work order file")->required();
  run->add_option("--config", config_file, "Scenario config file")->required();
  run->add_option("--seed", seed, "Random seed")->required();
  run->add_option("--trace", trace_file, "Write the event log here");
  run->add_option("--result", result_file, "Write the result file here");
  run->add_option("--mode", mode, "pick or stow (checked against the task file)");
  run->add_flag("--rebuild-cache", rebuild_cache, "Force offline library rebuild");

  CLI::App* score = app.add_subcommand("score", "Recompute points from a trace");
  score->add_option("--trace", trace_file, "Event log file")->required();
  score->add_option("--config", config_file, "Scenario config file")->required();

  CLI::App* replay = app.add_subcommand("replay", "Verify a trace against its result");
  replay->add_option("--trace", trace_file, "Event log file")->required();
  replay->add_option("--config", config_file, "Scenario config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(task_file, config_file, seed, trace_file, result_file, mode, rebuild_cache);
    if (score->parsed()) return cmd_score(trace_file, config_file);
    if (replay->parsed()) return cmd_replay(trace_file, config_file);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
