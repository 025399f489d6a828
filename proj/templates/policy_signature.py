class Policy:
    def __init__(self):
        """Initializes the policy.
        Parameters or internal states can be defined here
        """
        pass

    def take_action(self,
                    # energy stored in the battery [kWh]
                    current_energy_stored_kwh: float,
                    # PV power generation [kW]
                    current_pv_generation_kw: float,
                    # household power demand [kW]
                    current_demand_kw: float,
                    # grid purchase price [euro/kWh]
                    current_grid_buy_price: float,
                    # grid feed-in tariff (sell price) [euro/kWh]
                    current_grid_sell_price: float,
                    # Maximum battery capacity [kWh]
                    battery_capacity_kwh: float,
                    ) -> float:
        """Determines the target action for the battery based
        on the current state.

        Returns:
            float: The target power for the battery [kW]
            positive: charging; negative: discharging;
            zero: no action
        """
        # --- Implement your logic here ---
        # Example: Always return 0 (no action)
        action_kw = 0.0

        # Return the calculated action
        return action_kw
