# netdid package
