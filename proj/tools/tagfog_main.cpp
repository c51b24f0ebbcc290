#include "tagfog/pipeline/commands.hpp"

int main(int argc, char** argv) { return tagfog::pipeline::run_cli(argc, argv); }
