#pragma once

// Umbrella header: the full prompt-optimization toolkit.

#include "ictforge/actors.hpp"
#include "ictforge/bridge.hpp"
#include "ictforge/common.hpp"
#include "ictforge/core.hpp"
#include "ictforge/envkit.hpp"
#include "ictforge/families.hpp"
#include "ictforge/gateway.hpp"
#include "ictforge/housetext.hpp"
#include "ictforge/ict.hpp"
#include "ictforge/metaenv.hpp"
#include "ictforge/reflectors.hpp"
#include "ictforge/traindata.hpp"
#include "ictforge/verbgrid.hpp"
