#pragma once
// Umbrella header.

#include "versavid/error.hpp"
#include "versavid/task.hpp"
#include "versavid/text.hpp"
#include "versavid/reward.hpp"
#include "versavid/judge.hpp"
#include "versavid/remote_judge.hpp"
#include "versavid/toy_policy.hpp"
#include "versavid/grpo.hpp"
#include "versavid/toy_lab.hpp"
#include "versavid/curation.hpp"
#include "versavid/render.hpp"
#include "versavid/json_io.hpp"
#include "versavid/commands.hpp"
