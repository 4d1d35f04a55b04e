#include "annotrace/service.hpp"

#include <httplib.h>

#include <map>
#include <mutex>

#include "annotrace/annotate.hpp"
#include "annotrace/error.hpp"
#include "annotrace/hash.hpp"
#include "annotrace/pipeline.hpp"
#include "annotrace/png.hpp"
#include "annotrace/session.hpp"

namespace annotrace {

namespace fs = std::filesystem;
namespace jf = json_field;

namespace {

int status_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::MissingFile:
    case ErrorKind::IndexOutOfRange: return 404;
    case ErrorKind::SchemaViolation:
    case ErrorKind::UnsortedEvents: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, std::string_view message) {
  send_json(res, Json{{"error", kind}, {"message", message}}, status);
}

std::optional<std::int64_t> query_int(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  const auto v = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const auto n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw Error(ErrorKind::SchemaViolation, std::string("query parameter '") + name + "' must be an integer");
  }
}

}  // namespace

struct Service::Impl {
  fs::path root;
  httplib::Server server;
  std::mutex mu;  // guards the maps below
  std::map<std::string, std::shared_ptr<const SessionBundle>> bundles;  // by directory
  std::map<std::string, std::shared_ptr<std::mutex>> writers;           // by session id

  // session id -> bundle directory; rescanned per call so new bundles show up.
  std::map<std::string, fs::path> scan() {
    std::map<std::string, fs::path> out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(root, ec)) {
      if (!entry.is_directory() || !fs::exists(entry.path() / "manifest.json")) continue;
      try {
        const auto bytes = read_file_bytes(entry.path() / "manifest.json");
        const auto m = manifest_from_json(parse_json(std::string(bytes.begin(), bytes.end()), "manifest.json"));
        out.emplace(m.session_id, entry.path());
      } catch (const Error&) {
        // unreadable bundles are not listed
      }
    }
    return out;
  }

  fs::path session_dir(const std::string& id) {
    const auto all = scan();
    auto it = all.find(id);
    if (it == all.end()) throw Error(ErrorKind::MissingFile, "no session '" + id + "'");
    return it->second;
  }

  std::shared_ptr<const SessionBundle> bundle(const std::string& id) {
    const auto dir = session_dir(id);
    std::lock_guard lock(mu);
    auto& slot = bundles[dir.string()];
    if (!slot) slot = std::make_shared<const SessionBundle>(load_bundle(dir));
    return slot;
  }

  std::shared_ptr<std::mutex> writer(const std::string& id) {
    std::lock_guard lock(mu);
    auto& slot = writers[id];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
  }

  template <typename F>
  httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e.kind()), to_string(e.kind()), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
      }
    };
  }

  void routes();
};

void Service::Impl::routes() {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, If-None-Match");
    res.status = 204;
  });

  server.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
    Json list = Json::array();
    for (const auto& [id, dir] : scan()) {
      const auto bytes = read_file_bytes(dir / "manifest.json");
      list.push_back(parse_json(std::string(bytes.begin(), bytes.end()), "manifest.json"));
    }
    send_json(res, list);
  }));

  server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto bytes = read_file_bytes(session_dir(req.matches[1]) / "manifest.json");
    send_json(res, parse_json(std::string(bytes.begin(), bytes.end()), "manifest.json"));
  }));

  server.Get(R"(/sessions/([^/]+)/frames/(\d+)\.png)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto b = bundle(req.matches[1]);
    const int index = std::stoi(req.matches[2]);
    const auto png = encode_png(reconstruct_frame(*b, index));
    const auto etag = "\"" + sha256_hex(std::span<const std::uint8_t>(png)) + "\"";
    res.set_header("ETag", etag);
    res.set_header("Cache-Control", "max-age=3600");
    if (req.get_header_value("If-None-Match") == etag) {
      res.status = 304;
      return;
    }
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  }));

  server.Get(R"(/sessions/([^/]+)/events)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto b = bundle(req.matches[1]);
    const auto from = query_int(req, "from");
    const auto to = query_int(req, "to");
    std::optional<std::string> type;
    if (req.has_param("type")) {
      type = req.get_param_value("type");
      static const std::set<std::string> known = {"key", "click", "window", "proc", "comment"};
      if (!known.contains(*type)) throw Error(ErrorKind::SchemaViolation, "unknown event type '" + *type + "'");
    }
    Json list = Json::array();
    for (const auto& e : b->events()) {
      if (from && e.t.millis_utc < *from) continue;
      if (to && e.t.millis_utc > *to) continue;
      if (type && event_type_name(e.data) != *type) continue;
      list.push_back(event_to_json(e));
    }
    send_json(res, list);
  }));

  server.Get(R"(/sessions/([^/]+)/annotations)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto dir = session_dir(req.matches[1]);
    std::optional<AnnotationKind> kind;
    std::optional<AnnotationStatus> status;
    if (req.has_param("kind")) kind = annotation_kind_from_string(req.get_param_value("kind"));
    if (req.has_param("status")) status = annotation_status_from_string(req.get_param_value("status"));
    Json list = Json::array();
    for (const auto& a : AnnotationLog(dir / "annotations.jsonl").current()) {
      if (kind && a.kind != *kind) continue;
      if (status && a.status != *status) continue;
      list.push_back(annotation_to_json(a));
    }
    send_json(res, list);
  }));

  server.Post(R"(/sessions/([^/]+)/annotations)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto dir = session_dir(id);
    const auto body = parse_json(req.body, "request body");
    constexpr std::string_view where = "request body";
    Annotation a;
    a.session_id = id;
    a.kind = annotation_kind_from_string(jf::string(body, "kind", where));
    a.t_start = Timestamp{jf::integer(body, "t_start", where)};
    if (body.contains("t_end") && !body.at("t_end").is_null()) a.t_end = Timestamp{jf::integer(body, "t_end", where)};
    a.payload = jf::require(body, "payload", where);
    a.status = AnnotationStatus::Manual;
    a.provenance = {false, body.contains("author") ? jf::string(body, "author", where) : "anonymous"};
    a.id = "placeholder";
    validate_annotation(a);

    const auto lock_ptr = writer(id);
    std::lock_guard lock(*lock_ptr);
    AnnotationLog log(dir / "annotations.jsonl");
    const auto existing = log.records().size();
    a.id = "m-" + sha256_hex(annotation_to_json(a).dump() + "#" + std::to_string(existing)).substr(0, 16);
    log.append(a);
    send_json(res, annotation_to_json(a), 201);
  }));

  server.Patch(R"(/sessions/([^/]+)/annotations/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const std::string aid = req.matches[2];
    const auto dir = session_dir(id);
    const auto body = parse_json(req.body, "request body");
    constexpr std::string_view where = "request body";

    const auto lock_ptr = writer(id);
    std::lock_guard lock(*lock_ptr);
    AnnotationLog log(dir / "annotations.jsonl");
    const auto current = log.find(aid);
    if (!current) {
      send_error(res, 404, "MissingFile", "no annotation '" + aid + "'");
      return;
    }
    if (body.contains("expected_revision") &&
        jf::integer(body, "expected_revision", where) != current->revision) {
      send_json(res, Json{{"error", "Conflict"},
                          {"message", "annotation was changed; current revision is " + std::to_string(current->revision)},
                          {"current", annotation_to_json(*current)}},
                409);
      return;
    }
    Annotation next = *current;
    next.revision = current->revision + 1;
    next.predecessor = current->id + "@" + std::to_string(current->revision);
    next.provenance = {false, body.contains("author") ? jf::string(body, "author", where) : "anonymous"};
    if (body.contains("status")) next.status = annotation_status_from_string(jf::string(body, "status", where));
    if (body.contains("payload")) next.payload = body.at("payload");
    if (body.contains("t_start")) next.t_start = Timestamp{jf::integer(body, "t_start", where)};
    if (body.contains("t_end")) {
      if (body.at("t_end").is_null()) next.t_end.reset();
      else next.t_end = Timestamp{jf::integer(body, "t_end", where)};
    }
    validate_annotation(next);
    log.append(next);
    send_json(res, annotation_to_json(next));
  }));

  server.Get(R"(/sessions/([^/]+)/scatter\.csv)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto dir = session_dir(req.matches[1]);
    const auto b = bundle(req.matches[1]);
    const auto path = default_artifact_path(dir, b->manifest());
    if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, "artifact map " + path.string() + " not found");
    res.set_content(scatter_from_bundle(dir, import_artifact_map(path)), "text/csv");
  }));
}

Service::Service(fs::path root) : impl_(std::make_unique<Impl>()) {
  impl_->root = std::move(root);
  impl_->routes();
}

Service::~Service() {
  if (impl_) impl_->server.stop();
}

void Service::bind(const std::string& host, int port) {
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorKind::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
  }
}

int Service::bind_any_port(const std::string& host) {
  const int port = impl_->server.bind_to_any_port(host);
  if (port <= 0) throw Error(ErrorKind::BindFailure, "cannot bind " + host);
  return port;
}

void Service::run() { impl_->server.listen_after_bind(); }
void Service::stop() { impl_->server.stop(); }
bool Service::running() const { return impl_->server.is_running(); }

std::pair<std::string, int> parse_bind_address(const std::string& text) {
  std::string host = "127.0.0.1";
  std::string port = text;
  if (const auto colon = text.rfind(':'); colon != std::string::npos) {
    if (colon > 0) host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  int p = 0;
  try {
    std::size_t used = 0;
    p = std::stoi(port, &used);
    if (used != port.size()) throw std::invalid_argument(port);
  } catch (const std::exception&) {
    throw Error(ErrorKind::SchemaViolation, "bind address '" + text + "' needs a numeric port");
  }
  if (p < 0 || p > 65535) throw Error(ErrorKind::SchemaViolation, "port out of range in '" + text + "'");
  return {host, p};
}

}  // namespace annotrace
