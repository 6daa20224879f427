# vehicle package init
