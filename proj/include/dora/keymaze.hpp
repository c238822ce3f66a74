#pragma once

// KeyMaze: a small deterministic text world loaded from a JSON definition.
// Commands: go <dir>, open <obj>, take <obj>, unlock <door>, look, help.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dora/errors.hpp"
#include "dora/policy.hpp"
#include "dora/text_env.hpp"

namespace dora {

struct WorldRoom {
  std::string id;
  std::string name;
  std::string description;
  std::map<std::string, std::string> exits;  // direction -> room id
};

struct WorldContainer {
  std::string id;
  std::string name;
  std::string room;
  bool open = false;
};

struct WorldItem {
  std::string id;
  std::string name;
  std::string location;  // room id or container id
};

struct WorldDoor {
  std::string id;
  std::string name;
  std::string room;
  std::string direction;
  bool locked = true;
  std::string key;
};

struct WorldDefinition {
  std::string name;
  std::string start;
  std::string goal;
  std::vector<WorldRoom> rooms;
  std::vector<WorldContainer> containers;
  std::vector<WorldItem> items;
  std::vector<WorldDoor> doors;
  std::map<std::string, double> rewards;  // "take:<item>", "unlock:<door>", "open:<container>", "enter:<room>"

  const WorldRoom* room(std::string_view id) const {
    auto it = std::find_if(rooms.begin(), rooms.end(), [&](const auto& r) { return r.id == id; });
    return it == rooms.end() ? nullptr : &*it;
  }

  double total_reward() const {
    double t = 0.0;
    for (const auto& [event, v] : rewards) t += v;
    return t;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("world definition: " + m); };
    if (!room(start)) fail("unknown start room '" + start + "'");
    if (!room(goal)) fail("unknown goal room '" + goal + "'");
    std::set<std::string> ids;
    for (const auto& r : rooms) {
      if (!ids.insert(r.id).second) fail("duplicate room '" + r.id + "'");
    }
    for (const auto& r : rooms) {
      for (const auto& [dir, to] : r.exits) {
        if (!room(to)) fail("room '" + r.id + "' exits " + dir + " to unknown room '" + to + "'");
      }
    }
    std::set<std::string> containers_ids;
    for (const auto& c : containers) {
      if (!room(c.room)) fail("container '" + c.id + "' in unknown room");
      containers_ids.insert(c.id);
    }
    for (const auto& i : items) {
      if (!room(i.location) && !containers_ids.contains(i.location)) fail("item '" + i.id + "' has unknown location");
    }
    for (const auto& d : doors) {
      const auto* r = room(d.room);
      if (!r || !r->exits.contains(d.direction)) fail("door '" + d.id + "' does not guard an existing exit");
      if (!d.key.empty() && std::none_of(items.begin(), items.end(), [&](const auto& i) { return i.id == d.key; })) {
        fail("door '" + d.id + "' needs unknown key '" + d.key + "'");
      }
    }
    for (const auto& [event, v] : rewards) {
      if (v < 0.0) fail("negative reward for '" + event + "'");
    }
    if (total_reward() <= 0.0) fail("no positive reward events");
  }

  static WorldDefinition from_json(const nlohmann::json& j) {
    try {
      WorldDefinition w;
      w.name = j.value("name", std::string("world"));
      w.start = j.at("start").get<std::string>();
      w.goal = j.at("goal").get<std::string>();
      for (const auto& r : j.at("rooms")) {
        WorldRoom room{r.at("id").get<std::string>(), r.value("name", r.at("id").get<std::string>()),
                       r.value("description", std::string{}), {}};
        if (r.contains("exits")) room.exits = r.at("exits").get<std::map<std::string, std::string>>();
        w.rooms.push_back(std::move(room));
      }
      for (const auto& c : j.value("containers", nlohmann::json::array())) {
        w.containers.push_back({c.at("id").get<std::string>(), c.value("name", c.at("id").get<std::string>()),
                                c.at("room").get<std::string>(), c.value("open", false)});
      }
      for (const auto& i : j.value("items", nlohmann::json::array())) {
        w.items.push_back({i.at("id").get<std::string>(), i.value("name", i.at("id").get<std::string>()),
                           i.at("location").get<std::string>()});
      }
      for (const auto& d : j.value("doors", nlohmann::json::array())) {
        w.doors.push_back({d.at("id").get<std::string>(), d.value("name", d.at("id").get<std::string>()),
                           d.at("room").get<std::string>(), d.at("direction").get<std::string>(),
                           d.value("locked", true), d.value("key", std::string{})});
      }
      for (const auto& r : j.value("rewards", nlohmann::json::array())) {
        w.rewards[r.at("event").get<std::string>()] = r.at("value").get<double>();
      }
      w.validate();
      return w;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("world definition: ") + e.what());
    }
  }

  static WorldDefinition load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("world definition not found: " + path.string());
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("world definition is not valid JSON: " + path.string());
    return from_json(j);
  }
};

/// The default world: key in a closed chest in the foyer, locked door at
/// the north end of the hallway, and an eastward corridor that looks like
/// progress but dead-ends.
inline constexpr std::string_view kKeyMazeJson = R"json({
  "name": "keymaze",
  "start": "foyer",
  "goal": "courtyard",
  "rooms": [
    {"id": "foyer", "name": "Foyer", "description": "You are in a dusty foyer. Faded rugs cover the floor.",
     "exits": {"north": "hallway", "east": "gallery"}},
    {"id": "hallway", "name": "Hallway", "description": "A narrow hallway. At its far end stands a heavy oak door.",
     "exits": {"south": "foyer", "north": "courtyard"}},
    {"id": "gallery", "name": "Gallery",
     "description": "Portraits line the walls. A corridor leads east, and light seems to glow at its end.",
     "exits": {"west": "foyer", "east": "corridor"}},
    {"id": "corridor", "name": "Long Corridor", "description": "The corridor stretches onward. The exit must be close.",
     "exits": {"west": "gallery", "east": "alcove"}},
    {"id": "alcove", "name": "Alcove", "description": "The corridor ends at a painted window. The glow was only paint.",
     "exits": {"west": "corridor"}},
    {"id": "courtyard", "name": "Courtyard", "description": "You step into a sunlit courtyard. You are free.",
     "exits": {}}
  ],
  "containers": [{"id": "chest", "name": "wooden chest", "room": "foyer", "open": false}],
  "items": [{"id": "key", "name": "brass key", "location": "chest"}],
  "doors": [{"id": "door", "name": "oak door", "room": "hallway", "direction": "north", "locked": true, "key": "key"}],
  "rewards": [
    {"event": "take:key", "value": 0.3},
    {"event": "unlock:door", "value": 0.3},
    {"event": "enter:courtyard", "value": 0.4}
  ]
})json";

inline WorldDefinition keymaze_world() { return WorldDefinition::from_json(nlohmann::json::parse(kKeyMazeJson)); }

inline constexpr std::string_view kNothingHappens = "Nothing happens.";
inline constexpr std::string_view kHelpText =
    "Available commands: go <direction>, open <object>, take <object>, unlock door, look, help.";

class KeyMaze final : public TextEnv {
 public:
  explicit KeyMaze(WorldDefinition world = keymaze_world()) : world_(std::move(world)) {
    world_.validate();
    reset(0);
  }

  std::string name() const override { return world_.name; }

  /// The world is deterministic; `seed` is accepted for interface symmetry.
  std::string reset(std::uint64_t seed) override {
    (void)seed;
    position_ = world_.start;
    terminal_ = false;
    cumulative_ = 0.0;
    fired_.clear();
    inventory_.clear();
    container_open_.clear();
    for (const auto& c : world_.containers) container_open_[c.id] = c.open;
    door_locked_.clear();
    for (const auto& d : world_.doors) door_locked_[d.id] = d.locked;
    item_location_.clear();
    for (const auto& i : world_.items) item_location_[i.id] = i.location;
    return describe_room();
  }

  bool terminal() const override { return terminal_; }
  const std::string& position() const { return position_; }
  double score() const { return cumulative_ / world_.total_reward(); }
  const WorldDefinition& world() const { return world_; }

  TextEnvStep step(std::string_view action_text) override {
    require(!terminal_, "env_step: episode already terminated");
    const std::string action = normalize_action(action_text);
    TextEnvStep out;
    const double before = cumulative_;

    const auto space = action.find(' ');
    const std::string verb = action.substr(0, space);
    const std::string object = space == std::string::npos ? std::string{} : action.substr(space + 1);

    if (action == "look") {
      out.observation = describe_room();
    } else if (action == "help") {
      out.observation = std::string(kHelpText);
    } else if (verb == "go" && !object.empty()) {
      go(object, out);
    } else if (verb == "open" && !object.empty()) {
      open(object, out);
    } else if (verb == "take" && !object.empty()) {
      take(object, out);
    } else if (verb == "unlock" && !object.empty()) {
      unlock(object, out);
    } else {
      out.observation = std::string(kNothingHappens);
      out.valid_action = false;
    }
    out.reward = cumulative_ - before;
    out.score = score();
    out.terminal = terminal_;
    return out;
  }

 private:
  void fire(const std::string& event) {
    if (auto it = world_.rewards.find(event); it != world_.rewards.end() && fired_.insert(event).second) {
      cumulative_ += it->second;
    }
  }

  static bool matches(std::string_view object, std::string_view id, std::string_view name) {
    if (object == id || object == name) return true;
    // "key" names "brass key"
    return name.size() > object.size() && name.ends_with(object) && name[name.size() - object.size() - 1] == ' ';
  }

  const WorldDoor* door_at(std::string_view room, std::string_view direction) const {
    for (const auto& d : world_.doors) {
      if (d.room == room && d.direction == direction) return &d;
    }
    return nullptr;
  }

  bool item_visible(const WorldItem& item) const {
    const auto& loc = item_location_.at(item.id);
    if (loc == position_) return true;
    for (const auto& c : world_.containers) {
      if (c.id == loc && c.room == position_ && container_open_.at(c.id)) return true;
    }
    return false;
  }

  std::string item_names_in(std::string_view location) const {
    std::vector<std::string> names;
    for (const auto& i : world_.items) {
      if (item_location_.at(i.id) == location) names.push_back("a " + i.name);
    }
    std::string out;
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (k > 0) out += k + 1 == names.size() ? " and " : ", ";
      out += names[k];
    }
    return out;
  }

  std::string describe_room() const {
    const auto* room = world_.room(position_);
    std::string out = room->name + "\n" + room->description;
    for (const auto& c : world_.containers) {
      if (c.room != position_) continue;
      if (!container_open_.at(c.id)) {
        out += "\nThere is a closed " + c.name + " here.";
      } else {
        const auto inside = item_names_in(c.id);
        out += "\nThere is an open " + c.name + " here." + (inside.empty() ? " It is empty." : " It contains " + inside + ".");
      }
    }
    if (const auto loose = item_names_in(position_); !loose.empty()) out += "\nYou see " + loose + " here.";
    for (const auto& d : world_.doors) {
      if (d.room != position_) continue;
      out += "\nThe " + d.name + " to the " + d.direction + " is " + (door_locked_.at(d.id) ? "locked." : "unlocked.");
    }
    if (!room->exits.empty()) {
      out += "\nExits:";
      bool first = true;
      for (const auto& [dir, to] : room->exits) {
        out += (first ? " " : ", ") + dir;
        first = false;
      }
      out += ".";
    }
    return out;
  }

  void go(const std::string& direction, TextEnvStep& out) {
    const auto* room = world_.room(position_);
    auto it = room->exits.find(direction);
    if (it == room->exits.end()) {
      out.observation = "You can't go that way.";
      out.valid_action = false;
      return;
    }
    if (const auto* door = door_at(position_, direction); door && door_locked_.at(door->id)) {
      out.observation = "The " + door->name + " is locked.";
      out.valid_action = false;
      return;
    }
    position_ = it->second;
    fire("enter:" + position_);
    if (position_ == world_.goal) terminal_ = true;
    out.observation = describe_room();
  }

  void open(const std::string& object, TextEnvStep& out) {
    for (const auto& c : world_.containers) {
      if (c.room != position_ || !matches(object, c.id, c.name)) continue;
      if (container_open_.at(c.id)) {
        out.observation = "The " + c.name + " is already open.";
        return;
      }
      container_open_[c.id] = true;
      fire("open:" + c.id);
      const auto inside = item_names_in(c.id);
      out.observation = "You open the " + c.name + "." + (inside.empty() ? " It is empty." : " Inside you see " + inside + ".");
      return;
    }
    for (const auto& d : world_.doors) {
      if (d.room == position_ && matches(object, d.id, d.name)) {
        out.observation = door_locked_.at(d.id) ? "The " + d.name + " is locked." : "The " + d.name + " is already open.";
        out.valid_action = !door_locked_.at(d.id);
        return;
      }
    }
    out.observation = "You don't see that here.";
    out.valid_action = false;
  }

  void take(const std::string& object, TextEnvStep& out) {
    for (const auto& i : world_.items) {
      if (!matches(object, i.id, i.name)) continue;
      if (item_location_.at(i.id) == "@inventory") {
        out.observation = "You already have the " + i.name + ".";
        return;
      }
      if (!item_visible(i)) break;
      item_location_[i.id] = "@inventory";
      inventory_.insert(i.id);
      fire("take:" + i.id);
      out.observation = "Taken: " + i.name + ".";
      return;
    }
    out.observation = "You don't see that here.";
    out.valid_action = false;
  }

  void unlock(const std::string& object, TextEnvStep& out) {
    for (const auto& d : world_.doors) {
      if (d.room != position_ || !matches(object, d.id, d.name)) continue;
      if (!door_locked_.at(d.id)) {
        out.observation = "The " + d.name + " is already unlocked.";
        return;
      }
      if (!d.key.empty() && !inventory_.contains(d.key)) {
        out.observation = "You need a key to unlock the " + d.name + ".";
        out.valid_action = false;
        return;
      }
      door_locked_[d.id] = false;
      fire("unlock:" + d.id);
      out.observation = "You unlock the " + d.name + ".";
      return;
    }
    out.observation = "You don't see that here.";
    out.valid_action = false;
  }

  WorldDefinition world_;
  std::string position_;
  bool terminal_ = false;
  double cumulative_ = 0.0;
  std::set<std::string> fired_;
  std::set<std::string> inventory_;
  std::map<std::string, bool> container_open_;
  std::map<std::string, bool> door_locked_;
  std::map<std::string, std::string> item_location_;
};

}  // namespace dora
