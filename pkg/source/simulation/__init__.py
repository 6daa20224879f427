# simulation package init
