#include "freedrag/session.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <random>

namespace freedrag {

namespace {

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

Json point_status_json(PointStatus s) { return s == PointStatus::Active ? "active" : "terminated"; }

}  // namespace

// --- Session -----------------------------------------------------------------------

Session::Session(std::string id, Instruction inst)
    : id_(std::move(id)), inst_(std::move(inst)) {
  inst_.validate();
  problem_ = make_problem(inst_.backend);
  restart(problem_.initial_latent);
  created_at_ = updated_at_ = now_iso8601();
}

void Session::restart(const LatentCode& start) {
  start_latent_ = start;
  state_ = init_instruction_state(inst_, *problem_.backend, start_latent_);
  status_ = instruction_status(inst_, state_);
}

void Session::touch() { updated_at_ = now_iso8601(); }

StepOutcome Session::step() {
  if (status_ != RunStatus::Running) throw SessionConflict(status_);
  StepOutcome out;
  out.trace_from = state_.trace.size();
  try {
    status_ = step_instruction(inst_, state_, *problem_.backend);
  } catch (const DivergedError&) {
    status_ = RunStatus::Diverged;
  }
  out.status = status_;
  touch();
  return out;
}

void Session::set_points(std::vector<HandleTarget> points) {
  Instruction next = inst_;
  next.points = std::move(points);
  next.validate();
  inst_ = std::move(next);
  restart(state_.latent);
  touch();
}

void Session::set_mask(std::optional<Mask> mask) {
  Instruction next = inst_;
  next.mask = std::move(mask);
  next.validate();
  inst_ = std::move(next);
  restart(state_.latent);
  touch();
}

void Session::reset() {
  restart(problem_.initial_latent);
  touch();
}

Render Session::current_render() const { return render(problem_.backend->generate(state_.latent)); }

Json Session::snapshot() const {
  Json points = Json::array();
  std::vector<Json> trajectories(state_.points.size(), Json::array());
  for (std::size_t i = 0; i < state_.points.size(); ++i) {
    const auto& p = state_.points[i];
    points.push_back({{"handle", point_to_json(p.origin)},
                      {"target", point_to_json(p.target)},
                      {"current", point_to_json(p.current)},
                      {"status", point_status_json(p.status)},
                      {"L_in", p.L_in},
                      {"L_en", p.L_en},
                      {"lambda", p.lambda_last}});
    trajectories[i].push_back(point_to_json(p.origin));
  }
  for (const auto& r : state_.trace.records()) {
    trajectories.at(r.point_index).push_back(point_to_json(r.h));
  }
  return {{"session_id", id_},
          {"version", {{"drag_index", state_.drag_index}, {"substep", state_.substep}}},
          {"status", to_string(status_)},
          {"instruction", instruction_to_json(inst_)},
          {"points", points},
          {"trajectories", trajectories},
          {"trace", trace_records_to_json(state_.trace)},
          {"trace_length", state_.trace.size()},
          {"render", render_to_json(current_render())},
          {"created_at", created_at_},
          {"updated_at", updated_at_}};
}

Json Session::to_record() const {
  return {{"schema_version", kSchemaVersion},
          {"session_id", id_},
          {"instruction", instruction_to_json(inst_)},
          {"start_latent", std::vector<double>(start_latent_.begin(), start_latent_.end())},
          {"state", state_to_json(state_)},
          {"status", to_string(status_)},
          {"created_at", created_at_},
          {"updated_at", updated_at_}};
}

std::unique_ptr<Session> Session::from_record(const Json& record) {
  try {
    auto s = std::make_unique<Session>(record.at("session_id").get<std::string>(),
                                       instruction_from_json(record.at("instruction")));
    const auto start = record.at("start_latent").get<std::vector<double>>();
    detail::require(static_cast<Eigen::Index>(start.size()) == s->backend().latent_length(),
                    "session record: start latent length differs from the backend");
    s->start_latent_ = Eigen::Map<const LatentCode>(start.data(), static_cast<Eigen::Index>(start.size()));
    auto F0 = std::make_shared<const FeatureMap>(s->backend().generate(s->start_latent_));
    s->state_ = state_from_json(record.at("state"), std::move(F0));
    detail::require(s->state_.latent.size() == s->backend().latent_length(),
                    "session record: latent length differs from the backend");
    s->status_ = run_status_from_string(record.at("status").get<std::string>());
    s->created_at_ = record.at("created_at").get<std::string>();
    s->updated_at_ = record.at("updated_at").get<std::string>();
    return s;
  } catch (const Json::exception& e) {
    throw ContractViolation(std::string("session record: ") + e.what());
  }
}

// --- SessionWorker -------------------------------------------------------------------

SessionWorker::SessionWorker(std::unique_ptr<Session> session)
    : session_(std::move(session)), thread_([this](std::stop_token st) { loop(st); }) {}

SessionWorker::~SessionWorker() {
  thread_.request_stop();
  cv_.notify_all();
}

void SessionWorker::loop(std::stop_token stop) {
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, stop, [&] { return !queue_.empty(); });
      if (queue_.empty()) return;  // stop requested
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    task();
  }
}

// --- SessionRegistry -------------------------------------------------------------------

std::string SessionRegistry::fresh_id() {
  static thread_local std::mt19937_64 rng(std::random_device{}());
  char buf[40];
  std::snprintf(buf, sizeof buf, "s%llu-%016llx", static_cast<unsigned long long>(++counter_),
                static_cast<unsigned long long>(rng()));
  return buf;
}

std::string SessionRegistry::create(Instruction inst) {
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = fresh_id();
  }
  // Building the session renders F0; keep that outside the registry lock.
  auto worker = std::make_shared<SessionWorker>(std::make_unique<Session>(id, std::move(inst)));
  std::lock_guard lock(mutex_);
  workers_.emplace(id, std::move(worker));
  return id;
}

std::string SessionRegistry::adopt(std::unique_ptr<Session> session) {
  std::string id = session->id();
  auto worker = std::make_shared<SessionWorker>(std::move(session));
  std::lock_guard lock(mutex_);
  detail::require(!workers_.contains(id), "session id '" + id + "' already registered");
  workers_.emplace(id, std::move(worker));
  return id;
}

std::shared_ptr<SessionWorker> SessionRegistry::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = workers_.find(id);
  return it == workers_.end() ? nullptr : it->second;
}

bool SessionRegistry::erase(const std::string& id) {
  std::shared_ptr<SessionWorker> victim;
  {
    std::lock_guard lock(mutex_);
    auto it = workers_.find(id);
    if (it == workers_.end()) return false;
    victim = std::move(it->second);
    workers_.erase(it);
  }
  // The worker joins when the last in-flight handler drops its reference.
  return true;
}

std::vector<std::string> SessionRegistry::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : workers_) out.push_back(id);
  return out;
}

}  // namespace freedrag
