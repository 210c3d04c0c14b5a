#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nerloop/annotations.h"

namespace nerloop {

enum class TaskStatus { kPending, kLeased, kDone };
const char* to_string(TaskStatus s);

struct Lease {
  std::string reviewer_id;
  std::int64_t expires_at = 0;  // ms since epoch
};

struct ReviewTask {
  std::string task_id;
  std::size_t round = 0;
  LabeledParagraph silver;
  TaskStatus status = TaskStatus::kPending;
  std::optional<Lease> lease;
  // Last holder of an expired lease; may still submit until someone else
  // leases the task.
  std::string last_reviewer;
  std::optional<LabeledParagraph> result;
  std::string submitted_by;
  std::int64_t submitted_at = 0;
};

struct AnnotationSubmission {
  std::string task_id;
  std::vector<Span> spans;
  std::string reviewer_id;
  std::int64_t submitted_at = 0;  // 0: stamped by the queue
};

enum class SubmitStatus { kAccepted, kDuplicate, kUnknownTask, kInvalidSpans, kStaleLease };
const char* to_string(SubmitStatus s);

struct SubmitResult {
  SubmitStatus status;
  std::string message;
};

struct QueueProgress {
  std::optional<std::size_t> round;
  std::size_t pending = 0;
  std::size_t leased = 0;
  std::size_t done = 0;
  std::size_t total = 0;
};

using Clock = std::function<std::int64_t()>;
std::int64_t system_clock_ms();

// Review tasks grouped into rounds. Every state change is appended to an
// event log (created / leased / submitted) and flushed to disk before the
// call returns; constructing a queue over an existing log replays it.
// Thread safe.
class ReviewQueue {
 public:
  explicit ReviewQueue(std::string log_path = {}, Clock clock = system_clock_ms,
                       std::chrono::milliseconds lease_timeout = std::chrono::minutes(15));
  ~ReviewQueue();
  ReviewQueue(const ReviewQueue&) = delete;
  ReviewQueue& operator=(const ReviewQueue&) = delete;

  // Opens a new round holding one task per paragraph.
  std::size_t enqueue_round(std::span<const LabeledParagraph> silver);
  // A round already holding exactly these paragraphs, in order.
  std::optional<std::size_t> find_round(std::span<const LabeledParagraph> silver) const;

  // Oldest PENDING task of the current round, leased to the reviewer. A
  // reviewer holding an unexpired lease gets that task again.
  std::optional<ReviewTask> lease_next(const std::string& reviewer_id);
  SubmitResult submit(const AnnotationSubmission& submission);

  std::optional<ReviewTask> task(const std::string& task_id) const;
  std::optional<std::size_t> current_round() const;
  QueueProgress progress() const;
  QueueProgress progress(std::size_t round) const;
  bool round_complete(std::size_t round) const;
  // Verified paragraphs of a complete round, in task order.
  std::vector<LabeledParagraph> round_results(std::size_t round) const;
  // Waits until the round completes; false on timeout.
  bool wait_round(std::size_t round, std::chrono::milliseconds timeout);

  std::chrono::milliseconds lease_timeout() const { return lease_timeout_; }

 private:
  void append(const nlohmann::ordered_json& event);
  void replay();
  void apply(const nlohmann::json& event, std::size_t line);
  void expire_leases(std::int64_t now);
  QueueProgress progress_locked(std::size_t round) const;
  bool complete_locked(std::size_t round) const;

  std::string log_path_;
  std::FILE* log_ = nullptr;
  Clock clock_;
  std::chrono::milliseconds lease_timeout_;
  mutable std::mutex mu_;
  std::condition_variable changed_;
  std::map<std::string, ReviewTask> tasks_;
  std::vector<std::vector<std::string>> rounds_;  // task ids per round
};

nlohmann::ordered_json task_to_json(const ReviewTask& task);

}  // namespace nerloop
