def new_plan():
    # tap the Settings app element
    E("Homepage of the phone", "tap the Settings app element", imagined = True)
    E("Main page of the Settings app", "tap 'Wi-Fi' button")
    # if the Wi-Fi button is off, turn it on
    if not isTRUE("WIFI button on"):
        E("Wi-Fi (WLAN) settings", "tap the WLAN button")

    # iterate through all Wi-Fi networks on the screen
    i = 1
    while True:
        # if the i-th Wi-Fi network is out of screen, swipe down to show more Wi-Fi networks
        if isTRUE(f"the {i}-th Wi-Fi network on the screen is out of screen"):
            E("Wi-Fi (WLAN) settings", "swipe down")
            if isTrue("All Wi-Fi options are the same as before", compare_screen = True):
                return "No Wi-Fi with password 57889999 found" 
            i = 1
        E("Wi-Fi (WLAN) settings", f"tap the {i}-th Wi-Fi network on the screen")
        E("Page connecting to i-th Wi-Fi", "type password 57889999")
        E("Page connecting to i-th Wi-Fi", "tap 'CONNECT' button")
        if isTRUE("Wi-Fi connected"):
            # if the Wi-Fi is connected, break the loop
            break
        elif isTRUE("Wi-Fi still connecting"):
            # if the Wi-Fi is still connecting, wait for the screen to change
            wait()
        else:
            # if the password is incorrect, tap the 'CANCEL' button and continue to the next Wi-Fi network
            E("Page connecting to i-th Wi-Fi", "tap 'CANCEL' button")
            i += 1
    return "Task completed"
