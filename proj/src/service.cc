#include "nerloop/service.h"

#include <httplib.h>

#include "nerloop/dataset.h"

namespace nerloop {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ApiResponse error(int status, const std::string& code, const std::string& message) {
  return {status, ordered_json{{"error", code}, {"message", message}}};
}

ordered_json progress_json(const QueueProgress& p) {
  ordered_json j;
  j["round"] = p.round ? ordered_json(*p.round) : ordered_json(nullptr);
  j["pending"] = p.pending;
  j["leased"] = p.leased;
  j["done"] = p.done;
  j["total"] = p.total;
  j["complete"] = p.round.has_value() && p.done == p.total;
  return j;
}

std::optional<std::string> reviewer_of(const json& body) {
  if (!body.is_object() || !body.contains("reviewer_id") ||
      !body["reviewer_id"].is_string() || body["reviewer_id"].get<std::string>().empty())
    return std::nullopt;
  return body["reviewer_id"].get<std::string>();
}

}  // namespace

ApiResponse api_current_round(const ReviewQueue& queue) {
  return {200, progress_json(queue.progress())};
}

ApiResponse api_progress(const ReviewQueue& queue) {
  return {200, progress_json(queue.progress())};
}

ApiResponse api_lease(ReviewQueue& queue, const std::string& body) {
  const json j = json::parse(body, nullptr, false);
  const auto reviewer = reviewer_of(j);
  if (!reviewer) return error(400, "bad_request", "body must be {\"reviewer_id\": string}");
  const auto task = queue.lease_next(*reviewer);
  if (!task) return {204, nullptr};
  return {200, task_to_json(*task)};
}

ApiResponse api_submit(ReviewQueue& queue, const std::string& task_id,
                       const std::string& body) {
  const json j = json::parse(body, nullptr, false);
  const auto reviewer = reviewer_of(j);
  if (!reviewer || !j.contains("spans") || !j["spans"].is_array())
    return error(400, "bad_request",
                 "body must be {\"reviewer_id\": string, \"spans\": [...]}");
  AnnotationSubmission sub;
  sub.task_id = task_id;
  sub.reviewer_id = *reviewer;
  try {
    for (const auto& s : j["spans"]) sub.spans.push_back(span_from_json(s));
  } catch (const std::exception& e) {
    return error(422, to_string(SubmitStatus::kInvalidSpans), e.what());
  }
  const auto r = queue.submit(sub);
  switch (r.status) {
    case SubmitStatus::kAccepted:
    case SubmitStatus::kDuplicate:
      return {200, ordered_json{{"status", to_string(r.status)}, {"task_id", task_id}}};
    case SubmitStatus::kUnknownTask:
      return error(404, to_string(r.status), r.message);
    case SubmitStatus::kStaleLease:
      return error(409, to_string(r.status), r.message);
    case SubmitStatus::kInvalidSpans:
      return error(422, to_string(r.status), r.message);
  }
  return error(500, "internal", "unhandled submit status");
}

ReviewServer::ReviewServer(ReviewQueue& queue, std::string static_dir)
    : queue_(queue), server_(std::make_unique<httplib::Server>()) {
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    if (r.status != 204) res.set_content(r.body.dump(), "application/json");
  };
  server_->Get("/api/rounds/current", [this, reply](const httplib::Request&,
                                                    httplib::Response& res) {
    reply(res, api_current_round(queue_));
  });
  server_->Get("/api/progress", [this, reply](const httplib::Request&,
                                              httplib::Response& res) {
    reply(res, api_progress(queue_));
  });
  server_->Post("/api/tasks/lease", [this, reply](const httplib::Request& req,
                                                  httplib::Response& res) {
    reply(res, api_lease(queue_, req.body));
  });
  server_->Post(R"(/api/tasks/([^/]+)/submit)", [this, reply](const httplib::Request& req,
                                                              httplib::Response& res) {
    reply(res, api_submit(queue_, req.matches[1], req.body));
  });
  server_->set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                    std::exception_ptr ep) {
    std::string msg = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(ordered_json{{"error", "internal"}, {"message", msg}}.dump(),
                    "application/json");
  });
  if (!static_dir.empty()) server_->set_mount_point("/", static_dir);
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

void ReviewServer::serve() { server_->listen_after_bind(); }

void ReviewServer::stop() {
  if (server_) server_->stop();
}

ServiceAnnotator::ServiceAnnotator(ReviewQueue& queue,
                                   std::function<void(const QueueProgress&)> on_progress)
    : queue_(queue), on_progress_(std::move(on_progress)) {}

std::vector<LabeledParagraph> ServiceAnnotator::verify(
    std::span<const LabeledParagraph> silver) {
  if (silver.empty()) return {};
  auto round = queue_.find_round(silver);
  if (!round) round = queue_.enqueue_round(silver);
  while (!queue_.wait_round(*round, std::chrono::milliseconds(500))) {
    if (cancelled_) throw std::runtime_error("review round cancelled");
    if (on_progress_) on_progress_(queue_.progress(*round));
  }
  return queue_.round_results(*round);
}

}  // namespace nerloop
