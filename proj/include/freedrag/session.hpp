#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "freedrag/io.hpp"

namespace freedrag {

/// Raised when stepping a session whose run already finished.
class SessionConflict : public std::runtime_error {
 public:
  explicit SessionConflict(RunStatus status)
      : std::runtime_error("session already finished: " + to_string(status)), status_(status) {}
  RunStatus status() const { return status_; }

 private:
  RunStatus status_;
};

struct StepOutcome {
  RunStatus status = RunStatus::Running;
  std::size_t trace_from = 0;  // first record appended by this step
};

/// One interactive editing session: an instruction, its backend and the live
/// drag state. Not thread-safe; SessionWorker serializes access.
class Session {
 public:
  Session(std::string id, Instruction inst);

  const std::string& id() const { return id_; }
  const Instruction& instruction() const { return inst_; }
  const DragState& state() const { return state_; }
  RunStatus status() const { return status_; }
  const GeneratorBackend& backend() const { return *problem_.backend; }

  /// One drag. Throws SessionConflict once the run has finished.
  StepOutcome step();

  /// New points or mask restart the run from the current latent.
  void set_points(std::vector<HandleTarget> points);
  void set_mask(std::optional<Mask> mask);

  /// Back to the backend's initial latent with the current points and mask.
  void reset();

  Render current_render() const;

  /// Full state for clients: instruction, version, points, trajectories,
  /// trace and render.
  Json snapshot() const;

  /// Persistable record; from_record(to_record()) continues identically.
  Json to_record() const;
  static std::unique_ptr<Session> from_record(const Json& record);

 private:
  void restart(const LatentCode& start);
  void touch();

  std::string id_;
  Instruction inst_;
  Problem problem_;
  LatentCode start_latent_;  // latent the current run started from
  DragState state_;
  RunStatus status_ = RunStatus::Running;
  std::string created_at_;
  std::string updated_at_;
};

/// Owns a session and runs every command on a dedicated thread, so a slow
/// step in one session never blocks another.
class SessionWorker {
 public:
  explicit SessionWorker(std::unique_ptr<Session> session);
  ~SessionWorker();

  SessionWorker(const SessionWorker&) = delete;
  SessionWorker& operator=(const SessionWorker&) = delete;

  /// Queues fn(session) on the worker thread; exceptions reach the future.
  template <typename Fn>
  auto submit(Fn fn) -> std::future<std::invoke_result_t<Fn, Session&>> {
    using R = std::invoke_result_t<Fn, Session&>;
    auto task = std::make_shared<std::packaged_task<R()>>(
        [this, fn = std::move(fn)]() mutable { return fn(*session_); });
    auto future = task->get_future();
    {
      std::lock_guard lock(mutex_);
      queue_.emplace_back([task] { (*task)(); });
    }
    cv_.notify_one();
    return future;
  }

 private:
  void loop(std::stop_token stop);

  std::unique_ptr<Session> session_;
  std::mutex mutex_;
  std::condition_variable_any cv_;
  std::deque<std::function<void()>> queue_;
  std::jthread thread_;
};

/// Maps session ids to their workers.
class SessionRegistry {
 public:
  /// Validates the instruction, starts a worker and returns the new id.
  std::string create(Instruction inst);
  /// Registers a restored session under its recorded id.
  std::string adopt(std::unique_ptr<Session> session);
  std::shared_ptr<SessionWorker> find(const std::string& id) const;
  bool erase(const std::string& id);
  std::vector<std::string> ids() const;

 private:
  std::string fresh_id();

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<SessionWorker>> workers_;
  std::uint64_t counter_ = 0;
};

}  // namespace freedrag
