# planner package init
