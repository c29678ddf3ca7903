#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sodium.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>

#include "httplib.h"
#include "objattr/detector.hpp"
#include "objattr/image_io.hpp"

namespace objattr {

namespace {

using Clock = std::chrono::steady_clock;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  const std::size_t cap = sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(cap, '\0');
  sodium_bin2base64(out.data(), cap, bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(std::strlen(out.c_str()));
  return out;
}

[[noreturn]] void schema_error(const std::string& what) {
  throw BackendError(BackendError::Kind::malformed_response, what);
}

double finite_number(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number()) schema_error(where + " is not a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema_error(where + " is not finite");
  return v;
}

}  // namespace

nlohmann::json make_wire_request(const Image& image, const std::vector<CategoryId>& categories,
                                 int n_max) {
  return {{"image_png_base64", base64_encode(encode_png(image))},
          {"categories", categories},
          {"n_max", n_max}};
}

DetectionSet parse_wire_response(const nlohmann::json& response, int n_max) {
  if (!response.is_object()) schema_error("response is not an object");
  if (!response.contains("detections")) schema_error("missing 'detections'");
  if (!response.contains("scores_available")) schema_error("missing 'scores_available'");
  const auto& dets = response.at("detections");
  if (!dets.is_array()) schema_error("'detections' is not an array");
  if (!response.at("scores_available").is_boolean()) schema_error("'scores_available' is not a bool");
  if (static_cast<long long>(dets.size()) > n_max) {
    schema_error("response has " + std::to_string(dets.size()) + " detections, n_max is " +
                 std::to_string(n_max));
  }

  DetectionSet out;
  out.scores_available = response.at("scores_available").get<bool>();
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const std::string where = "detections[" + std::to_string(i) + "]";
    const auto& d = dets[i];
    if (!d.is_object()) schema_error(where + " is not an object");
    if (!d.contains("box") || !d.contains("scores")) schema_error(where + " lacks box or scores");
    const auto& box = d.at("box");
    if (!box.is_array() || box.size() != 4) schema_error(where + ".box is not [x1,y1,x2,y2]");
    Detection det;
    det.box = BBox{finite_number(box[0], where + ".box"), finite_number(box[1], where + ".box"),
                   finite_number(box[2], where + ".box"), finite_number(box[3], where + ".box")};
    if (!det.box.valid()) schema_error(where + ".box violates 0 <= x1 < x2, 0 <= y1 < y2");
    const auto& scores = d.at("scores");
    if (!scores.is_object() || scores.empty()) schema_error(where + ".scores is not a non-empty object");
    for (const auto& [category, value] : scores.items()) {
      const double s = finite_number(value, where + ".scores[" + category + "]");
      if (s < 0 || s > 1) schema_error(where + ".scores[" + category + "] outside [0,1]");
      det.scores[category] = s;
    }
    out.detections.push_back(std::move(det));
  }
  return out;
}

DetectionSet parse_wire_response(const std::string& body, int n_max) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    schema_error(std::string("invalid JSON: ") + e.what());
  }
  return parse_wire_response(j, n_max);
}

// ---------------------------------------------------------------------------
// HTTP

HttpTransport::HttpTransport(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::string HttpTransport::round_trip(const std::string& request_line) const {
  httplib::Client client(base_url_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const auto start = Clock::now();
  auto res = client.Post("/detect", request_line, "application/json");
  if (!res) {
    const auto err = res.error();
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           (err == httplib::Error::Read && Clock::now() - start >= timeout_);
    throw BackendError(timed_out ? BackendError::Kind::timeout : BackendError::Kind::transport,
                       base_url_ + "/detect: " + httplib::to_string(err));
  }
  if (res->status != 200) {
    throw BackendError(BackendError::Kind::transport,
                       base_url_ + "/detect: HTTP " + std::to_string(res->status) + " " + res->body);
  }
  return res->body;
}

// ---------------------------------------------------------------------------
// stdio

StdioTransport::StdioTransport(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {}

StdioTransport::~StdioTransport() {
  std::lock_guard lock(mutex_);
  shutdown();
}

void StdioTransport::spawn() const {
  int in_pair[2];   // parent writes [0], child stdin reads [1]
  int out_pipe[2];  // child stdout writes [1], parent reads [0]
  if (socketpair(AF_UNIX, SOCK_STREAM, 0, in_pair) != 0) {
    throw BackendError(BackendError::Kind::transport, "socketpair: " + std::string(strerror(errno)));
  }
  if (pipe(out_pipe) != 0) {
    close(in_pair[0]);
    close(in_pair[1]);
    throw BackendError(BackendError::Kind::transport, "pipe: " + std::string(strerror(errno)));
  }
  const pid_t pid = fork();
  if (pid < 0) {
    close(in_pair[0]);
    close(in_pair[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    throw BackendError(BackendError::Kind::transport, "fork: " + std::string(strerror(errno)));
  }
  if (pid == 0) {
    dup2(in_pair[1], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pair[0]);
    close(in_pair[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pair[1]);
  close(out_pipe[1]);
  fcntl(out_pipe[0], F_SETFD, FD_CLOEXEC);
  fcntl(in_pair[0], F_SETFD, FD_CLOEXEC);
  pid_ = pid;
  to_child_ = in_pair[0];
  from_child_ = out_pipe[0];
  pending_.clear();
}

void StdioTransport::shutdown() const {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    kill(pid_, SIGTERM);
    waitpid(pid_, nullptr, 0);
  }
  pid_ = -1;
  pending_.clear();
}

std::string StdioTransport::round_trip(const std::string& request_line) const {
  std::lock_guard lock(mutex_);
  if (pid_ < 0) spawn();

  const std::string line = request_line + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t n = send(to_child_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string why = strerror(errno);
      shutdown();
      throw BackendError(BackendError::Kind::transport, describe() + ": write failed: " + why);
    }
    sent += static_cast<std::size_t>(n);
  }

  const auto deadline = Clock::now() + timeout_;
  for (;;) {
    const auto nl = pending_.find('\n');
    if (nl != std::string::npos) {
      std::string reply = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      return reply;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) {
      shutdown();
      throw BackendError(BackendError::Kind::timeout, describe() + ": no reply within deadline");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int rc = poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc == 0) continue;
    char buf[65536];
    const ssize_t n = read(from_child_, buf, sizeof(buf));
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      shutdown();
      throw BackendError(BackendError::Kind::transport, describe() + ": server closed the stream");
    }
    pending_.append(buf, static_cast<std::size_t>(n));
  }
}

// ---------------------------------------------------------------------------

WireDetector::WireDetector(std::unique_ptr<WireTransport> transport,
                           std::vector<CategoryId> categories, int n_max)
    : transport_(std::move(transport)), categories_(std::move(categories)), n_max_(n_max) {
  if (n_max < 1) throw InvalidInput("n_max must be >= 1");
}

std::unique_ptr<WireDetector> WireDetector::connect(const std::string& endpoint,
                                                    std::vector<CategoryId> categories, int n_max,
                                                    std::chrono::milliseconds timeout) {
  std::unique_ptr<WireTransport> transport;
  if (endpoint.rfind("stdio:", 0) == 0) {
    transport = std::make_unique<StdioTransport>(endpoint.substr(6), timeout);
  } else if (endpoint.rfind("http://", 0) == 0) {
    transport = std::make_unique<HttpTransport>(endpoint, timeout);
  } else {
    throw InvalidInput("wire endpoint must start with http:// or stdio: (got '" + endpoint + "')");
  }
  return std::make_unique<WireDetector>(std::move(transport), std::move(categories), n_max);
}

DetectionSet WireDetector::detect(const Image& image) const {
  const std::string request = make_wire_request(image, categories_, n_max_).dump();
  return parse_wire_response(transport_->round_trip(request), n_max_);
}

std::string WireDetector::fingerprint() const {
  std::string cats;
  for (const auto& c : categories_) cats += c + ",";
  return "wire:" + transport_->describe() + "|n_max=" + std::to_string(n_max_) + "|" +
         fnv1a_hex(cats);
}

}  // namespace objattr
