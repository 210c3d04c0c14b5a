#include "nerloop/review_queue.h"

#include <unistd.h>

#include <fstream>
#include <stdexcept>

#include "nerloop/dataset.h"
#include "nerloop/error.h"
#include "nerloop/unicode.h"

namespace nerloop {

using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::kPending: return "PENDING";
    case TaskStatus::kLeased: return "LEASED";
    case TaskStatus::kDone: return "DONE";
  }
  return "?";
}

const char* to_string(SubmitStatus s) {
  switch (s) {
    case SubmitStatus::kAccepted: return "accepted";
    case SubmitStatus::kDuplicate: return "duplicate";
    case SubmitStatus::kUnknownTask: return "unknown_task";
    case SubmitStatus::kInvalidSpans: return "invalid_spans";
    case SubmitStatus::kStaleLease: return "stale_lease";
  }
  return "?";
}

std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

ReviewQueue::ReviewQueue(std::string log_path, Clock clock,
                         std::chrono::milliseconds lease_timeout)
    : log_path_(std::move(log_path)), clock_(std::move(clock)),
      lease_timeout_(lease_timeout) {
  if (lease_timeout_.count() <= 0) throw std::invalid_argument("lease timeout must be positive");
  if (log_path_.empty()) return;
  replay();
  log_ = std::fopen(log_path_.c_str(), "a");
  if (!log_) throw std::runtime_error("cannot open queue log " + log_path_);
}

ReviewQueue::~ReviewQueue() {
  if (log_) std::fclose(log_);
}

void ReviewQueue::append(const ordered_json& event) {
  if (!log_) return;
  const std::string line = event.dump() + "\n";
  if (std::fputs(line.c_str(), log_) < 0 || std::fflush(log_) != 0 ||
      ::fsync(::fileno(log_)) != 0)
    throw std::runtime_error("cannot persist queue event to " + log_path_);
}

void ReviewQueue::replay() {
  std::ifstream in(log_path_);
  if (!in) return;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json e = json::parse(line, nullptr, false);
    if (e.is_discarded()) {
      // A torn final line is a write that was never acknowledged.
      if (in.peek() == EOF) break;
      throw FormatError("queue log is not valid JSON", n);
    }
    apply(e, n);
  }
}

void ReviewQueue::apply(const json& e, std::size_t line) {
  try {
    const auto kind = e.at("event").get<std::string>();
    const auto id = e.at("task_id").get<std::string>();
    if (kind == "created") {
      ReviewTask t;
      t.task_id = id;
      t.round = e.at("round").get<std::size_t>();
      t.silver = labeled_from_json(e.at("paragraph"));
      if (t.round >= rounds_.size()) rounds_.resize(t.round + 1);
      rounds_[t.round].push_back(id);
      tasks_[id] = std::move(t);
      return;
    }
    auto& t = tasks_.at(id);
    if (kind == "leased") {
      t.status = TaskStatus::kLeased;
      t.lease = Lease{e.at("reviewer_id").get<std::string>(),
                      e.at("expires_at").get<std::int64_t>()};
      t.last_reviewer = t.lease->reviewer_id;
    } else if (kind == "submitted") {
      LabeledParagraph gold = t.silver;
      gold.provenance = Provenance::kGold;
      gold.spans.clear();
      for (const auto& s : e.at("spans")) gold.spans.push_back(span_from_json(s));
      t.result = std::move(gold);
      t.status = TaskStatus::kDone;
      t.lease.reset();
      t.submitted_by = e.at("reviewer_id").get<std::string>();
      t.submitted_at = e.at("submitted_at").get<std::int64_t>();
    } else {
      throw FormatError("unknown event '" + kind + "'", line);
    }
  } catch (const json::exception& ex) {
    throw FormatError(std::string("bad queue event: ") + ex.what(), line);
  } catch (const std::out_of_range&) {
    throw FormatError("event for unknown task", line);
  }
}

void ReviewQueue::expire_leases(std::int64_t now) {
  for (auto& [id, t] : tasks_) {
    if (t.status == TaskStatus::kLeased && t.lease && t.lease->expires_at <= now) {
      t.status = TaskStatus::kPending;
      t.lease.reset();
    }
  }
}

std::size_t ReviewQueue::enqueue_round(std::span<const LabeledParagraph> silver) {
  std::lock_guard lock(mu_);
  const std::size_t round = rounds_.size();
  rounds_.emplace_back();
  for (std::size_t i = 0; i < silver.size(); ++i) {
    validate(silver[i]);
    ReviewTask t;
    t.task_id = "r" + std::to_string(round) + "-" + std::to_string(i);
    t.round = round;
    t.silver = silver[i];
    ordered_json e;
    e["event"] = "created";
    e["task_id"] = t.task_id;
    e["round"] = round;
    e["paragraph"] = to_json(t.silver, {true});
    append(e);
    rounds_[round].push_back(t.task_id);
    tasks_[t.task_id] = std::move(t);
  }
  changed_.notify_all();
  return round;
}

std::optional<std::size_t> ReviewQueue::find_round(
    std::span<const LabeledParagraph> silver) const {
  std::lock_guard lock(mu_);
  for (std::size_t r = rounds_.size(); r-- > 0;) {
    const auto& ids = rounds_[r];
    if (ids.size() != silver.size()) continue;
    bool same = true;
    for (std::size_t i = 0; same && i < ids.size(); ++i)
      same = tasks_.at(ids[i]).silver == silver[i];
    if (same) return r;
  }
  return std::nullopt;
}

std::optional<ReviewTask> ReviewQueue::lease_next(const std::string& reviewer_id) {
  std::lock_guard lock(mu_);
  const auto now = clock_();
  expire_leases(now);
  if (rounds_.empty()) return std::nullopt;
  const auto& ids = rounds_.back();
  for (const auto& id : ids) {
    auto& t = tasks_.at(id);
    if (t.status == TaskStatus::kLeased && t.lease->reviewer_id == reviewer_id) return t;
  }
  for (const auto& id : ids) {
    auto& t = tasks_.at(id);
    if (t.status != TaskStatus::kPending) continue;
    Lease lease{reviewer_id, now + lease_timeout_.count()};
    ordered_json e;
    e["event"] = "leased";
    e["task_id"] = id;
    e["reviewer_id"] = reviewer_id;
    e["expires_at"] = lease.expires_at;
    append(e);
    t.status = TaskStatus::kLeased;
    t.lease = lease;
    t.last_reviewer = reviewer_id;
    changed_.notify_all();
    return t;
  }
  return std::nullopt;
}

SubmitResult ReviewQueue::submit(const AnnotationSubmission& sub) {
  std::lock_guard lock(mu_);
  const auto now = clock_();
  expire_leases(now);
  const auto it = tasks_.find(sub.task_id);
  if (it == tasks_.end()) return {SubmitStatus::kUnknownTask, "no task " + sub.task_id};
  auto& t = it->second;
  if (t.status == TaskStatus::kDone) {
    if (t.submitted_by == sub.reviewer_id && t.result->spans == sub.spans)
      return {SubmitStatus::kDuplicate, "already stored"};
    return {SubmitStatus::kStaleLease, "task is already done"};
  }
  const bool holder = t.status == TaskStatus::kLeased
                          ? t.lease->reviewer_id == sub.reviewer_id
                          : t.last_reviewer == sub.reviewer_id;
  if (!holder) return {SubmitStatus::kStaleLease, "lease is held by someone else or was never taken"};
  for (const auto& s : sub.spans) {
    if (s.label.empty()) return {SubmitStatus::kInvalidSpans, "span without a label"};
  }
  try {
    validate_spans(t.silver.tokens, sub.spans, char_length(t.silver.paragraph.text));
  } catch (const std::exception& e) {
    return {SubmitStatus::kInvalidSpans, e.what()};
  }
  const std::int64_t at = sub.submitted_at ? sub.submitted_at : now;
  ordered_json e;
  e["event"] = "submitted";
  e["task_id"] = t.task_id;
  e["reviewer_id"] = sub.reviewer_id;
  e["submitted_at"] = at;
  ordered_json spans = ordered_json::array();
  for (const auto& s : sub.spans) spans.push_back(to_json(s));
  e["spans"] = spans;
  append(e);  // persisted before the caller hears back
  LabeledParagraph gold = t.silver;
  gold.spans = sub.spans;
  gold.provenance = Provenance::kGold;
  t.result = std::move(gold);
  t.status = TaskStatus::kDone;
  t.lease.reset();
  t.submitted_by = sub.reviewer_id;
  t.submitted_at = at;
  changed_.notify_all();
  return {SubmitStatus::kAccepted, "stored"};
}

std::optional<ReviewTask> ReviewQueue::task(const std::string& task_id) const {
  std::lock_guard lock(mu_);
  const auto it = tasks_.find(task_id);
  if (it == tasks_.end()) return std::nullopt;
  ReviewTask t = it->second;
  if (t.status == TaskStatus::kLeased && t.lease->expires_at <= clock_()) {
    t.status = TaskStatus::kPending;
    t.lease.reset();
  }
  return t;
}

std::optional<std::size_t> ReviewQueue::current_round() const {
  std::lock_guard lock(mu_);
  if (rounds_.empty()) return std::nullopt;
  return rounds_.size() - 1;
}

QueueProgress ReviewQueue::progress_locked(std::size_t round) const {
  QueueProgress p;
  p.round = round;
  const auto now = clock_();
  for (const auto& id : rounds_.at(round)) {
    const auto& t = tasks_.at(id);
    ++p.total;
    if (t.status == TaskStatus::kDone) {
      ++p.done;
    } else if (t.status == TaskStatus::kLeased && t.lease->expires_at > now) {
      ++p.leased;
    } else {
      ++p.pending;
    }
  }
  return p;
}

QueueProgress ReviewQueue::progress() const {
  std::lock_guard lock(mu_);
  if (rounds_.empty()) return {};
  return progress_locked(rounds_.size() - 1);
}

QueueProgress ReviewQueue::progress(std::size_t round) const {
  std::lock_guard lock(mu_);
  return progress_locked(round);
}

bool ReviewQueue::complete_locked(std::size_t round) const {
  for (const auto& id : rounds_.at(round)) {
    if (tasks_.at(id).status != TaskStatus::kDone) return false;
  }
  return true;
}

bool ReviewQueue::round_complete(std::size_t round) const {
  std::lock_guard lock(mu_);
  return complete_locked(round);
}

std::vector<LabeledParagraph> ReviewQueue::round_results(std::size_t round) const {
  std::lock_guard lock(mu_);
  if (!complete_locked(round))
    throw std::logic_error("round " + std::to_string(round) + " is not complete");
  std::vector<LabeledParagraph> out;
  for (const auto& id : rounds_.at(round)) out.push_back(*tasks_.at(id).result);
  return out;
}

bool ReviewQueue::wait_round(std::size_t round, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  return changed_.wait_for(lock, timeout, [&] { return complete_locked(round); });
}

ordered_json task_to_json(const ReviewTask& t) {
  ordered_json j;
  j["task_id"] = t.task_id;
  j["round"] = t.round;
  j["status"] = to_string(t.status);
  j["doc_id"] = t.silver.paragraph.doc_id;
  j["para_index"] = t.silver.paragraph.para_index;
  const auto rec = to_json(t.silver);
  j["text"] = rec["text"];
  j["tokens"] = rec["tokens"];
  j["spans"] = rec["spans"];
  if (t.lease) {
    j["lease"] = {{"reviewer_id", t.lease->reviewer_id},
                  {"expires_at", t.lease->expires_at}};
  } else {
    j["lease"] = nullptr;
  }
  return j;
}

}  // namespace nerloop
