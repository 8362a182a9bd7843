#pragma once

#include "clusterscreen/agglomerative.hpp"
#include "clusterscreen/config.hpp"
#include "clusterscreen/core.hpp"
#include "clusterscreen/dbscan.hpp"
#include "clusterscreen/gmm.hpp"
#include "clusterscreen/harness.hpp"
#include "clusterscreen/ingest.hpp"
#include "clusterscreen/kmeans.hpp"
#include "clusterscreen/metrics.hpp"
#include "clusterscreen/random.hpp"
#include "clusterscreen/report.hpp"
