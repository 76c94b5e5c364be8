#pragma once

#include <condition_variable>
#include <chrono>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "texanno/errors.hpp"
#include "texanno/pipeline.hpp"
#include "texanno/store.hpp"

namespace texanno {

enum class JobState { kQueued, kRunning, kDone, kFailed };

std::string_view to_string(JobState s);

struct JobStatus {
  std::string job_id;
  std::string kind;
  JobState state = JobState::kQueued;
  double progress = 0.0;
  std::string result_ref;
  std::string error;

  nlohmann::json to_json() const;
};

/// Bounded worker pool for long operations. States only move forward and
/// progress never decreases.
class JobManager {
 public:
  using Progress = std::function<void(double)>;
  // Returns the result reference published on completion.
  using Task = std::function<std::string(const Progress&)>;

  explicit JobManager(std::size_t workers = 1);
  ~JobManager();
  JobManager(const JobManager&) = delete;
  JobManager& operator=(const JobManager&) = delete;

  JobStatus submit(std::string kind, Task task);
  std::optional<JobStatus> get(const std::string& job_id) const;
  /// Blocks until the job finished or the timeout elapsed.
  std::optional<JobStatus> wait(const std::string& job_id, std::chrono::milliseconds timeout) const;
  void shutdown();

 private:
  void worker();
  void advance(const std::string& id, JobState state, double progress, std::string result = {},
               std::string error = {});

  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::condition_variable work_;
  std::map<std::string, JobStatus> jobs_;
  std::deque<std::pair<std::string, Task>> queue_;
  std::vector<std::thread> threads_;
  bool stopping_ = false;
};

struct GatewayOptions {
  // bearer token -> annotator id
  std::map<std::string, std::string> tokens;
  std::size_t workers = 1;
  std::size_t page_size = 50;
  PipelineConfig config;
};

/// HTTP status and machine-readable code for an error.
std::pair<int, std::string> http_error(ErrorCode code);

/// HTTP API over a store. All mutations go through Store operations and are
/// serialized by one writer lock.
class Gateway {
 public:
  Gateway(Store& store, GatewayOptions options);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Port 0 binds any free port. Returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void serve();
  void stop();

  JobManager& jobs();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace texanno
