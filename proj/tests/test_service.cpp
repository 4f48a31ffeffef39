#include "nsgen/data.hpp"
#include "nsgen/service.hpp"

#include <doctest.h>
#include <httplib.h>

#include <filesystem>
#include <future>
#include <thread>

using namespace nsgen;
using json = nlohmann::json;

namespace {

struct Fixture {
  std::filesystem::path dir;
  Service svc{{}};

  Fixture() {
    dir = std::filesystem::temp_directory_path() / "nsgen_unit_service";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    ModelConfig c;
    c.input_size = 16;
    c.base_width = 4;
    Checkpoint cav{UNet<float>(c), {}};
    cav.meta.stage = "A";
    cav.meta.problem = "cavity";
    cav.meta.input_recipe = kBcOnly;
    cav.meta.ranges = {{"u0", {0.0, 0.5}}, {"lid_start", {0.0, 0.5}}, {"lid_extent", {0.25, 1.0}}};
    save_checkpoint(dir / "cavity", cav);

    c.in_channels = 4;
    Checkpoint in{UNet<float>(c), {}};
    in.meta.stage = "B3";
    in.meta.problem = "internal";
    in.meta.input_recipe = kBcOnly;
    in.meta.ranges = {{"u0", {0.0, 0.5}}, {"v0", {0.0, 0.5}}};
    in.meta.max_obstacles = 3;
    save_checkpoint(dir / "internal", in);

    write_file(dir / "registry.json",
               json{{"models", {{{"id", "cav"}, {"checkpoint", "cavity"}},
                                {{"id", "flow"}, {"checkpoint", "internal"}}}}}
                   .dump());
    svc = Service(load_registry(dir / "registry.json"));
  }
  ~Fixture() { std::filesystem::remove_all(dir); }
};

json body(const HttpReply& r) { return json::parse(r.body); }

}  // namespace

TEST_CASE("registry resolves relative paths and rejects duplicate ids") {
  Fixture f;
  REQUIRE(f.svc.entries().size() == 2);
  CHECK(f.svc.find("flow")->checkpoint == f.dir / "internal");
  CHECK(f.svc.find("nope") == nullptr);
  write_file(f.dir / "dup.json", json::array({{{"id", "a"}, {"checkpoint", "cavity"}},
                                              {{"id", "a"}, {"checkpoint", "internal"}}})
                                     .dump());
  CHECK_THROWS_AS(load_registry(f.dir / "dup.json"), std::invalid_argument);
}

TEST_CASE("model listing mirrors checkpoint metadata") {
  Fixture f;
  const json list = f.svc.list_models();
  REQUIRE(list.size() == 2);
  for (const auto& m : list) {
    const auto& meta = f.svc.find(m.at("id"))->model->meta;
    REQUIRE(m.at("ranges").size() == meta.ranges.size());
    for (const auto& [k, r] : meta.ranges) {
      CHECK(m.at("ranges").at(k)[0].get<double>() == r[0]);
      CHECK(m.at("ranges").at(k)[1].get<double>() == r[1]);
    }
    CHECK(m.at("max_obstacles") == meta.max_obstacles);
  }
  CHECK(Service({}).list_models() == json::array());
}

TEST_CASE("out-of-range parameters are rejected naming the bound") {
  Fixture f;
  HttpReply r = f.svc.solve(R"({"model_id":"flow","inlet":{"u0":0.9,"v0":0.1}})", "");
  CHECK(r.status == 400);
  CHECK(body(r).at("error").get<std::string>().find("upper bound 0.5") != std::string::npos);
  r = f.svc.solve(R"({"model_id":"flow","inlet":{"u0":0.1,"v0":-0.2}})", "");
  CHECK(r.status == 400);
  CHECK(body(r).at("error").get<std::string>().find("v0 = -0.2 is below the lower bound 0") !=
        std::string::npos);
  r = f.svc.solve(R"({"model_id":"cav","lid":{"velocity":0.3,"start":0.5,"extent":0.75}})", "");
  CHECK(r.status == 400);
  r = f.svc.solve(R"({"model_id":"cav","inlet":{"u0":0.1,"v0":0.1}})", "");
  CHECK(r.status == 400);
  CHECK(f.svc.solve("not json", "").status == 400);
}

TEST_CASE("unknown models and bad shapes") {
  Fixture f;
  CHECK(f.svc.solve(R"({"model_id":"ghost","inlet":{"u0":0.1,"v0":0.1}})", "").status == 404);
  const HttpReply ring = f.svc.solve(
      R"({"model_id":"flow","inlet":{"u0":0.1,"v0":0.1},"shapes":[{"type":"rect","x":0,"y":3,"width":3,"height":3}]})",
      "");
  CHECK(ring.status == 422);
  const HttpReply many = f.svc.solve(
      R"({"model_id":"flow","inlet":{"u0":0.1,"v0":0.1},"shapes":[
          {"type":"circle","cx":4,"cy":4,"radius":1},{"type":"circle","cx":10,"cy":4,"radius":1},
          {"type":"circle","cx":4,"cy":10,"radius":1},{"type":"circle","cx":10,"cy":10,"radius":1}]})",
      "");
  CHECK(many.status == 400);
}

TEST_CASE("identical requests return identical field payloads") {
  Fixture f;
  const std::string req =
      R"({"model_id":"flow","inlet":{"u0":0.2,"v0":0.5},"shapes":[{"type":"circle","cx":8,"cy":8,"radius":2}]})";
  const HttpReply a = f.svc.solve(req, "");
  REQUIRE(a.status == 200);
  auto fut = std::async(std::launch::async, [&] { return f.svc.solve(req, ""); });
  const HttpReply b = f.svc.solve(req, "");
  const HttpReply c = fut.get();
  CHECK(body(a).at("fields") == body(b).at("fields"));
  CHECK(body(a).at("fields") == body(c).at("fields"));
  const json meta = body(a).at("meta");
  CHECK(meta.at("latency_ms").get<double>() >= 0.0);
  CHECK(meta.at("model_id") == "flow");
  const auto nsf = decode_nsf1(base64_decode(body(a).at("fields").at("data").get<std::string>()));
  CHECK(nsf.nx == 16);
  CHECK(nsf.channels.size() == 3);
  const HttpReply arr = f.svc.solve(req, "application/json");
  CHECK(body(arr).at("fields").at("u").size() == 16);
}

TEST_CASE("oracle solve with a zero budget times out immediately") {
  Fixture f;
  const HttpReply r = f.svc.oracle_solve(R"({"lid":{"velocity":0.5},"grid_size":16,"budget_ms":0})");
  CHECK(r.status == 408);
  CHECK(body(r).at("partial") == true);
  CHECK(f.svc.oracle_solve(R"({"lid":{"velocity":0.5},"budget_ms":-1})").status == 400);
  CHECK(f.svc.oracle_solve(R"({"lid":{"velocity":0.5},"grid_size":256})").status == 400);
  const HttpReply ok = f.svc.oracle_solve(R"({"lid":{"velocity":0.5},"grid_size":16})");
  CHECK(ok.status == 200);
  CHECK(body(ok).at("converged") == true);
}

TEST_CASE("server-sent oracle progress over HTTP") {
  Fixture f;
  httplib::Server server;
  f.svc.install(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto models = cli.Get("/models");
  REQUIRE(models);
  CHECK(json::parse(models->body).size() == 2);

  auto bad = cli.Post("/solve", R"({"model_id":"flow","inlet":{"u0":0.7,"v0":0.1}})", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);

  std::string stream;
  httplib::Request req;
  req.method = "POST";
  req.path = "/oracle-solve";
  req.body = R"({"model_id":"cav","lid":{"velocity":0.5}})";
  req.set_header("Accept", "text/event-stream");
  req.set_header("Content-Type", "application/json");
  req.content_receiver = [&](const char* data, size_t len, uint64_t, uint64_t) {
    stream.append(data, len);
    return true;
  };
  auto res = cli.send(req);
  REQUIRE(res);
  CHECK(res->status == 200);

  long last = 0;
  int progress = 0;
  std::string final_event;
  std::size_t pos = 0;
  while ((pos = stream.find("event: ", pos)) != std::string::npos) {
    const auto eol = stream.find('\n', pos);
    const std::string name = stream.substr(pos + 7, eol - pos - 7);
    const auto data_end = stream.find("\n\n", eol);
    const json data = json::parse(stream.substr(eol + 7, data_end - eol - 7));
    if (name == "progress") {
      CHECK(data.at("step").get<long>() > last);
      last = data.at("step").get<long>();
      ++progress;
    } else {
      final_event = name;
      CHECK(data.at("status") == 200);
      CHECK(data.at("converged") == true);
    }
    pos = data_end;
  }
  CHECK(progress > 1);
  CHECK(final_event == "result");

  server.stop();
  t.join();
}

TEST_CASE("serve options fall back to the environment") {
  setenv("NSGEN_PORT", "9123", 1);
  setenv("NSGEN_REGISTRY", "/tmp/r.json", 1);
  ServeOptions o = resolve_serve_options("", 0);
  CHECK(o.port == 9123);
  CHECK(o.registry == "/tmp/r.json");
  o = resolve_serve_options("x.json", 7000);
  CHECK(o.port == 7000);
  CHECK(o.registry == "x.json");
  unsetenv("NSGEN_PORT");
  unsetenv("NSGEN_REGISTRY");
  CHECK(resolve_serve_options("", 0).port == 8089);
}
