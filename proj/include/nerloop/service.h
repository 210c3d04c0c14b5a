#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <string>

#include <json.hpp>

#include "nerloop/loop.h"
#include "nerloop/review_queue.h"

namespace httplib {
class Server;
}

namespace nerloop {

// Transport-free request handling, so the protocol can be exercised
// without sockets. `body` is the raw request body.
struct ApiResponse {
  int status = 200;
  nlohmann::ordered_json body;  // null for 204
};

ApiResponse api_current_round(const ReviewQueue& queue);
ApiResponse api_progress(const ReviewQueue& queue);
ApiResponse api_lease(ReviewQueue& queue, const std::string& body);
ApiResponse api_submit(ReviewQueue& queue, const std::string& task_id,
                       const std::string& body);

// HTTP+JSON front end over a queue:
//   GET  /api/rounds/current
//   GET  /api/progress
//   POST /api/tasks/lease          {"reviewer_id"}
//   POST /api/tasks/{id}/submit    {"reviewer_id", "spans"}
// Static files (the reviewer UI) are served from `static_dir` if given.
class ReviewServer {
 public:
  explicit ReviewServer(ReviewQueue& queue, std::string static_dir = {});
  ~ReviewServer();

  // Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void serve();
  void stop();

 private:
  ReviewQueue& queue_;
  std::unique_ptr<httplib::Server> server_;
};

// Annotator backed by human reviewers: publishes the silver paragraphs as a
// queue round and blocks until every task is submitted. A round already in
// the queue with the same paragraphs (a resumed run) is reused.
class ServiceAnnotator : public Annotator {
 public:
  explicit ServiceAnnotator(ReviewQueue& queue,
                            std::function<void(const QueueProgress&)> on_progress = {});

  std::vector<LabeledParagraph> verify(std::span<const LabeledParagraph> silver) override;

  // Makes a blocked verify() throw std::runtime_error.
  void cancel() { cancelled_ = true; }

 private:
  ReviewQueue& queue_;
  std::function<void(const QueueProgress&)> on_progress_;
  std::atomic<bool> cancelled_{false};
};

}  // namespace nerloop
