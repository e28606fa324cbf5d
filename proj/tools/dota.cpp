#include "dota/cli.hpp"

int main(int argc, char** argv) { return dota::dispatch(argc, argv); }
