#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "objattr/types.hpp"

namespace objattr {

/// Black-box object detector: image in, candidate boxes with per-category
/// confidences out. Implementations must tolerate concurrent detect() calls.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual DetectionSet detect(const Image& image) const = 0;
  /// Stable identifier recorded alongside attribution artifacts.
  virtual std::string fingerprint() const = 0;
};

/// Transport, protocol or timeout failure in a detector backend.
class BackendError : public std::runtime_error {
 public:
  enum class Kind { transport, malformed_response, timeout };

  BackendError(Kind kind, const std::string& cause);

  Kind kind() const { return kind_; }
  const std::string& cause() const { return cause_; }

 private:
  Kind kind_;
  std::string cause_;
};

const char* to_string(BackendError::Kind kind);

// ---------------------------------------------------------------------------
// Synthetic analytic detector

struct Inhibitor {
  BBox region;
  double weight = 0;  // in [0, 1]
};

struct BlobObject {
  BBox region;
  CategoryId category;
  double exponent = 1.0;
  std::optional<Inhibitor> inhibitor;
};

/// Configuration of the analytic blob detector. An object's confidence is
/// v^p * (1 - w*u): v is the visible fraction of its region, u the visible
/// fraction of its inhibitor region.
struct BlobWorld {
  std::vector<BlobObject> objects;

  /// Throws InvalidInput when a region leaves the image or a parameter is out of range.
  void validate(int height, int width) const;

  nlohmann::json to_json() const;
  static BlobWorld from_json(const nlohmann::json& j);
};

/// Visibility is judged by comparing pixels to `baseline`; a pixel is visible
/// when any channel differs from it.
DetectionSet detect_synthetic_blob(const BlobWorld& world, const Image& image,
                                   std::uint8_t baseline = 0);

class BlobDetector final : public Detector {
 public:
  BlobDetector(BlobWorld world, std::uint8_t baseline = 0, int n_max = 300);

  DetectionSet detect(const Image& image) const override;
  std::string fingerprint() const override;

  const BlobWorld& world() const { return world_; }

 private:
  BlobWorld world_;
  std::uint8_t baseline_;
  int n_max_;
};

// ---------------------------------------------------------------------------
// Decorators

/// Drops detections whose best confidence is below the threshold. Exists for
/// threshold ablations; the default pipeline keeps every candidate.
class ThresholdDetector final : public Detector {
 public:
  ThresholdDetector(std::shared_ptr<const Detector> inner, double threshold);
  DetectionSet detect(const Image& image) const override;
  std::string fingerprint() const override;

 private:
  std::shared_ptr<const Detector> inner_;
  double threshold_;
};

/// Marks responses as confidence-free so scoring relies on IoU alone.
class IouOnlyDetector final : public Detector {
 public:
  explicit IouOnlyDetector(std::shared_ptr<const Detector> inner);
  DetectionSet detect(const Image& image) const override;
  std::string fingerprint() const override;

 private:
  std::shared_ptr<const Detector> inner_;
};

/// Counts forward passes; used to verify call budgets.
class CountingDetector final : public Detector {
 public:
  explicit CountingDetector(const Detector& inner) : inner_(inner) {}
  DetectionSet detect(const Image& image) const override;
  std::string fingerprint() const override { return inner_.fingerprint(); }

  long long calls() const { return calls_.load(); }
  void reset() { calls_.store(0); }

 private:
  const Detector& inner_;
  mutable std::atomic<long long> calls_{0};
};

// ---------------------------------------------------------------------------
// Wire protocol client

struct DetectorSpec {
  enum class Kind { synthetic_blob, wire };

  Kind kind = Kind::synthetic_blob;
  std::vector<CategoryId> categories;
  int n_max = 300;
  std::optional<double> score_threshold;
  bool iou_only = false;

  void validate() const;
};

/// Request body: {"image_png_base64", "categories", "n_max"}.
nlohmann::json make_wire_request(const Image& image, const std::vector<CategoryId>& categories,
                                 int n_max);

/// Strict response validation. Any schema violation (missing field, wrong
/// type, invalid box, confidence outside [0,1], more than n_max detections)
/// raises BackendError{malformed_response}; unknown fields are ignored.
DetectionSet parse_wire_response(const nlohmann::json& response, int n_max);
DetectionSet parse_wire_response(const std::string& body, int n_max);

/// Moves one newline-free JSON request to a server and returns its reply.
class WireTransport {
 public:
  virtual ~WireTransport() = default;
  virtual std::string round_trip(const std::string& request_line) const = 0;
  virtual std::string describe() const = 0;
};

/// POST {base_url}/detect; one client per call so calls are independent.
class HttpTransport final : public WireTransport {
 public:
  HttpTransport(std::string base_url, std::chrono::milliseconds timeout);
  std::string round_trip(const std::string& request_line) const override;
  std::string describe() const override { return base_url_; }

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

/// Newline-delimited JSON over a child process's stdin/stdout. Requests are
/// serialised by an internal lock.
class StdioTransport final : public WireTransport {
 public:
  StdioTransport(std::string command, std::chrono::milliseconds timeout);
  ~StdioTransport() override;
  StdioTransport(const StdioTransport&) = delete;
  StdioTransport& operator=(const StdioTransport&) = delete;

  std::string round_trip(const std::string& request_line) const override;
  std::string describe() const override { return "stdio:" + command_; }

 private:
  void spawn() const;
  void shutdown() const;

  std::string command_;
  std::chrono::milliseconds timeout_;
  mutable std::mutex mutex_;
  mutable int pid_ = -1;
  mutable int to_child_ = -1;
  mutable int from_child_ = -1;
  mutable std::string pending_;
};

class WireDetector final : public Detector {
 public:
  WireDetector(std::unique_ptr<WireTransport> transport, std::vector<CategoryId> categories,
               int n_max = 300);

  /// `endpoint` is "http://host:port" or "stdio:<shell command>".
  static std::unique_ptr<WireDetector> connect(const std::string& endpoint,
                                               std::vector<CategoryId> categories, int n_max,
                                               std::chrono::milliseconds timeout);

  DetectionSet detect(const Image& image) const override;
  std::string fingerprint() const override;

 private:
  std::unique_ptr<WireTransport> transport_;
  std::vector<CategoryId> categories_;
  int n_max_;
};

/// FNV-1a 64-bit, hex encoded. Used for detector fingerprints.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace objattr
