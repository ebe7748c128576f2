#pragma once

#include "taxoclass/describe.hpp"
#include "taxoclass/document.hpp"
#include "taxoclass/embedding.hpp"
#include "taxoclass/errors.hpp"
#include "taxoclass/evaluation.hpp"
#include "taxoclass/gateway.hpp"
#include "taxoclass/pipeline.hpp"
#include "taxoclass/postprocess.hpp"
#include "taxoclass/prompts.hpp"
#include "taxoclass/response.hpp"
#include "taxoclass/retrieval.hpp"
#include "taxoclass/strategies.hpp"
#include "taxoclass/taxonomy.hpp"
